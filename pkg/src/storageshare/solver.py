"""Branch-and-bound drivers over the embedded simplex engine.

Three entry points: solve_lp for plain linear programs, solve_milp for
binary models (either a linearized division model or any LinearProgram
plus a list of binary columns), and solve_lpcc which branches directly on
complementarity pairs without big-M constants. Both tree solvers share a
best-first core with warm-started node LPs; node order and therefore node
counts are deterministic for a fixed model.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .instance import Division, Instance, ScheduleSet
from .lp import LinearProgram, LpSolution, build_llm_c, build_llm_d, evaluate, make_lp
from .mpec import MilpModel, MpecModel, row_value
from .oracle import check_schedule_invariants
from .simplex import Simplex, solve_lp_engine

_BRANCHING = ("auto", "most-fractional", "most-violated-complementarity")
_EXIT_CODES = {"optimal": 0, "infeasible": 2, "unbounded": 3, "limit": 4}
_INT_TOL = 1e-6


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-7
    gap_target: float = 0.0
    node_limit: int = 100_000
    time_limit: float = 600.0
    branching: str = "auto"
    anti_cycling: bool = True
    lp_iteration_limit: int | None = None

    def __post_init__(self):
        if self.feas_tol <= 0 or self.opt_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.gap_target < 0:
            raise ValueError("gap_target must be >= 0")
        if self.node_limit < 1:
            raise ValueError("node_limit must be >= 1")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.branching not in _BRANCHING:
            raise ValueError(f"branching must be one of {_BRANCHING}")
        if self.lp_iteration_limit is not None and self.lp_iteration_limit < 1:
            raise ValueError("lp_iteration_limit must be >= 1")


@dataclass(frozen=True, eq=False)
class SolveResult:
    status: str  # optimal | infeasible | unbounded | limit
    x: np.ndarray | None
    objective: float
    best_bound: float
    gap: float
    node_count: int
    wall_time: float
    iterations: int
    model: object
    dual_g: np.ndarray | None = None
    dual_h: np.ndarray | None = None
    bound_history: tuple = ()
    incumbent_history: tuple = ()

    @property
    def exit_code(self) -> int:
        return _EXIT_CODES[self.status]


def _engine(lp: LinearProgram, opts: SolveOptions) -> Simplex:
    if opts.anti_cycling:
        return Simplex(lp, max_iter=opts.lp_iteration_limit)
    return Simplex(lp, max_iter=opts.lp_iteration_limit, bland_after=None)


def solve_lp(lp: LinearProgram, options: SolveOptions | None = None) -> LpSolution:
    """Solve one LinearProgram; thin wrapper fixing policy from options."""
    opts = options or SolveOptions()
    return _engine(lp, opts).solve()


def _relative_gap(objective: float, bound: float) -> float:
    if not np.isfinite(objective):
        return np.inf
    return max(0.0, (objective - bound) / max(1.0, abs(objective)))


def _wrap_lp_result(lp, sol, model, t0) -> SolveResult:
    status = {"iteration_limit": "limit"}.get(sol.status, sol.status)
    ok = status == "optimal"
    return SolveResult(
        status=status,
        x=sol.x.copy() if ok else None,
        objective=sol.objective if ok else np.nan,
        best_bound=sol.objective if ok else (-np.inf if status == "unbounded" else np.inf),
        gap=0.0 if ok else np.inf,
        node_count=1,
        wall_time=time.perf_counter() - t0,
        iterations=sol.iterations,
        model=model,
        dual_g=sol.dual_g if ok else None,
        dual_h=sol.dual_h if ok else None,
        bound_history=(sol.objective,) if ok else (),
        incumbent_history=(sol.objective,) if ok else (),
    )


def _branch_and_bound(lp, opts, classify, model, heuristic=None):
    """Best-first search; classify(sol) returns either an incumbent
    candidate or the two child bound-fixes of the branching decision.
    Ties on the bound favor deeper nodes so plateaus dive to leaves.
    heuristic, when given, may turn any node relaxation into a side
    incumbent without affecting the tree itself."""
    t0 = time.perf_counter()
    engine = _engine(lp, opts)
    base_lo = np.concatenate([lp.lb, np.zeros(lp.n_g)])
    base_hi = np.concatenate([lp.ub, np.full(lp.n_g, np.inf)])

    incumbent_x = None
    incumbent_obj = np.inf
    bound_hist: list[float] = []
    inc_hist: list[float] = []
    heap: list = []
    seq = 0
    global_bound = -np.inf
    limit_hit = False
    node_count = 0
    iterations = 0

    def prune_eps() -> float:
        if not np.isfinite(incumbent_obj):
            return 0.0
        return 1e-9 + opts.gap_target * max(1.0, abs(incumbent_obj))

    def raise_bound(b: float):
        nonlocal global_bound
        if b > global_bound:
            global_bound = b
            bound_hist.append(b)

    def take_incumbent(x2, obj2):
        nonlocal incumbent_x, incumbent_obj
        if obj2 < incumbent_obj:
            incumbent_x, incumbent_obj = x2, obj2
            inc_hist.append(obj2)

    def consider(sol, fixes, parent_bound) -> str | None:
        """Route one solved node; returns a terminal status or None."""
        nonlocal seq, limit_hit
        if sol.status == "infeasible":
            return None
        if sol.status == "iteration_limit":
            limit_hit = True
            return None
        if sol.status == "unbounded":
            return "unbounded"
        bound = max(float(sol.objective), parent_bound)
        if incumbent_x is not None and bound >= incumbent_obj - prune_eps():
            return None
        kind, payload = classify(sol)
        if kind == "incumbent":
            take_incumbent(*payload)
            return None
        if heuristic is not None:
            side = heuristic.try_point(sol.x)
            if side is not None:
                take_incumbent(*side)
                if bound >= incumbent_obj - prune_eps():
                    return None
        heapq.heappush(heap, (bound, -len(fixes), seq, fixes, engine.snapshot(), payload))
        seq += 1
        return None

    root = engine.solve()
    node_count += 1
    iterations += root.iterations
    if root.status != "optimal":
        status = {"iteration_limit": "limit"}.get(root.status, root.status)
        return SolveResult(
            status=status, x=None, objective=np.nan,
            best_bound=-np.inf if status == "unbounded" else np.inf,
            gap=np.inf, node_count=node_count,
            wall_time=time.perf_counter() - t0, iterations=iterations,
            model=model,
        )
    raise_bound(float(root.objective))
    terminal = consider(root, (), -np.inf)

    while heap and terminal is None and not limit_hit:
        if node_count >= opts.node_limit or time.perf_counter() - t0 > opts.time_limit:
            limit_hit = True
            break
        bound, _, _, fixes, snap, branch = heapq.heappop(heap)
        raise_bound(bound)
        if incumbent_x is not None and bound >= incumbent_obj - prune_eps():
            continue
        for col, lo_fix, hi_fix in branch:
            lo, hi = base_lo.copy(), base_hi.copy()
            for c_, l_, h_ in fixes:
                lo[c_] = max(lo[c_], l_)
                hi[c_] = min(hi[c_], h_)
            lo[col] = max(lo[col], lo_fix)
            hi[col] = min(hi[col], hi_fix)
            sol = engine.resolve(snap, lo, hi)
            node_count += 1
            iterations += sol.iterations
            terminal = consider(sol, fixes + ((col, lo_fix, hi_fix),), bound)
            if terminal is not None or limit_hit:
                break
            if node_count >= opts.node_limit or time.perf_counter() - t0 > opts.time_limit:
                limit_hit = True
                break

    if terminal == "unbounded":
        return SolveResult(
            status="unbounded", x=None, objective=np.nan, best_bound=-np.inf,
            gap=np.inf, node_count=node_count,
            wall_time=time.perf_counter() - t0, iterations=iterations,
            model=model,
        )
    if limit_hit:
        status = "limit"
    elif incumbent_x is not None:
        status = "optimal"
        raise_bound(incumbent_obj)
    else:
        status = "infeasible"
    if status == "infeasible":
        best_bound = np.inf
        objective = np.nan
        gap = np.inf
    else:
        best_bound = min(global_bound, incumbent_obj)
        objective = incumbent_obj if incumbent_x is not None else np.nan
        gap = 0.0 if status == "optimal" else _relative_gap(objective, best_bound)
    return SolveResult(
        status=status,
        x=incumbent_x,
        objective=objective,
        best_bound=best_bound,
        gap=gap,
        node_count=node_count,
        wall_time=time.perf_counter() - t0,
        iterations=iterations,
        model=model,
        bound_history=tuple(bound_hist),
        incumbent_history=tuple(inc_hist),
    )


def _pair_products(lp, pairs, bg, x):
    slack = np.empty(len(pairs))
    prod = np.empty(len(pairs))
    for q, (w_col, g_row) in enumerate(pairs):
        s = float(lp.g_val[g_row] @ x[lp.g_idx[g_row]]) - bg[g_row]
        slack[q] = s
        prod[q] = x[w_col] * s
    return slack, prod


def _party_dispatch_lp(inst, p, capacity):
    if p < inst.customer_count:
        return build_llm_c(inst, p, capacity)
    return build_llm_d(inst, capacity)


class _DivisionHeuristic:
    """Turns any capacity division into a feasible point of the joint model.

    Every party's dispatch LP solved at a fixed division yields, with its
    multipliers, an exact optimality system solution (dispatch variables
    are free, so reduced costs vanish at the optimum). Stitching those
    together with the implied system peak gives an incumbent; the division
    is read off a node relaxation, and repeats are skipped via a cache.
    """

    def __init__(self, mpec: MpecModel, feas_lp: LinearProgram, u_cols=None):
        self.mpec = mpec
        self.feas_lp = feas_lp
        self.u_cols = u_cols
        self.seen: set = set()

    def _division_of(self, x_relax):
        mp = self.mpec
        vals = [float(x_relax[mp.div_disco_col])]
        vals += [float(x_relax[c]) for c in mp.div_cust_cols]
        return tuple(round(max(0.0, v), 9) for v in vals)

    def try_point(self, x_relax):
        """Returns (x, objective) or None if this division was already tried
        or the stitched point fails verification."""
        key = self._division_of(x_relax)
        if key in self.seen:
            return None
        self.seen.add(key)
        mp = self.mpec
        inst = mp.instance
        t = inst.grid.slot_count
        lp = mp.lp
        x = np.zeros(self.feas_lp.n_vars)
        x[mp.div_disco_col] = key[0]
        for i, c in enumerate(mp.div_cust_cols):
            x[c] = key[1 + i]
        net = inst.loads.system_load.astype(float).copy()
        for p, lay in enumerate(mp.parties()):
            cap = key[0] if lay.cap_col == mp.div_disco_col else key[1 + p]
            if p < inst.customer_count:
                sub = build_llm_c(inst, p, cap)
            else:
                sub = build_llm_d(inst, cap)
            sol = solve_lp_engine(sub)
            if sol.status != "optimal":
                return None
            x[lay.x0: lay.x0 + lay.nx] = sol.x
            x[lay.w0: lay.w0 + lay.nw] = sol.dual_g
            x[lay.v0: lay.v0 + lay.nv] = sol.dual_h
            net += sol.x[:t] - sol.x[t: 2 * t]
        x[mp.peak_col] = float(net.max())
        if self.u_cols is not None:
            for q, (w_col, g_row) in enumerate(mp.pairs):
                s = row_value(lp, g_row, x)
                x[self.u_cols[q]] = 1.0 if x[w_col] > s else 0.0
        if not evaluate(self.feas_lp, x).feasible(1e-6):
            return None
        obj = float(self.feas_lp.c @ x) + self.feas_lp.objective_constant
        return x, obj


def _classify_plain_binary(lp, cols):
    cols = np.asarray(cols, dtype=int)

    def classify(sol):
        x = sol.x
        vals = x[cols]
        frac = np.abs(vals - np.round(vals))
        if np.all(frac <= _INT_TOL):
            x2 = x.copy()
            x2[cols] = np.round(vals)
            if evaluate(lp, x2).feasible(1e-6):
                obj = float(lp.c @ x2) + lp.objective_constant
                return "incumbent", (x2, obj)
            return "incumbent", (x.copy(), float(sol.objective))
        col = int(cols[int(np.argmax(frac))])
        return "branch", ((col, 0.0, 0.0), (col, 1.0, 1.0))

    return classify


def _classify_milp(milp: MilpModel, opts: SolveOptions, branching: str,
                   lp: LinearProgram | None = None):
    lp = milp.lp if lp is None else lp
    bg = lp.b_g()
    u_cols = np.asarray(milp.binary_cols, dtype=int)

    def classify(sol):
        x = sol.x
        uvals = x[u_cols]
        frac = np.abs(uvals - np.round(uvals))
        if np.all(frac <= _INT_TOL):
            x2 = x.copy()
            x2[u_cols] = np.round(uvals)
            if evaluate(lp, x2).feasible(1e-6):
                return "incumbent", (x2, float(sol.objective))
            return "incumbent", (x.copy(), float(sol.objective))
        slack, prod = _pair_products(lp, milp.pairs, bg, x)
        if float(prod.max()) <= opts.feas_tol:
            x2 = x.copy()
            for q, (w_col, _) in enumerate(milp.pairs):
                x2[u_cols[q]] = 1.0 if x[w_col] >= slack[q] else 0.0
            if evaluate(lp, x2).feasible(1e-6):
                return "incumbent", (x2, float(sol.objective))
        if branching == "most-violated-complementarity":
            q = int(np.argmax(prod))
            if frac[q] <= _INT_TOL:  # that u already settled, take worst loose one
                loose = np.nonzero(frac > _INT_TOL)[0]
                q = int(loose[np.argmax(prod[loose])])
            col = int(u_cols[q])
        else:
            col = int(u_cols[int(np.argmax(frac))])
        return "branch", ((col, 0.0, 0.0), (col, 1.0, 1.0))

    return classify


def _classify_lpcc(mpec: MpecModel, opts: SolveOptions,
                   lp: LinearProgram | None = None):
    lp = mpec.lp if lp is None else lp
    bg = lp.b_g()
    n_struct = lp.n_vars

    def classify(sol):
        x = sol.x
        slack, prod = _pair_products(lp, mpec.pairs, bg, x)
        if float(prod.max()) <= opts.feas_tol:
            return "incumbent", (x.copy(), float(sol.objective))
        q = int(np.argmax(prod))
        w_col, g_row = mpec.pairs[q]
        # either the multiplier goes to zero, or the row to equality
        return "branch", ((w_col, 0.0, 0.0), (n_struct + g_row, 0.0, 0.0))

    return classify


def solve_milp(model, options: SolveOptions | None = None, binary_cols=None) -> SolveResult:
    """Best-first branch and bound on binary columns.

    model is either a linearized division model (binaries implied) or a
    plain LinearProgram with binary_cols listing the 0/1 columns. The bound
    sequence is non-decreasing and the incumbent sequence non-increasing by
    construction (child bounds are clamped to their parent's).
    """
    opts = options or SolveOptions()
    if isinstance(model, MilpModel):
        branching = opts.branching
        if branching == "auto":
            branching = "most-violated-complementarity"
        classify = _classify_milp(model, opts, branching)
        heur = _DivisionHeuristic(model.mpec, model.lp, u_cols=model.binary_cols)
        result = _branch_and_bound(model.lp, opts, classify, model, heuristic=heur)
        if result.x is not None:
            polished = _polish_duals(model.mpec, result.x, feas_lp=model.lp,
                                     u_cols=model.binary_cols)
            if polished is not None:
                result = _replace_x(result, polished)
        return result
    lp = model
    if not isinstance(lp, LinearProgram):
        raise TypeError("model must be a MilpModel or a LinearProgram")
    if binary_cols is None or len(binary_cols) == 0:
        t0 = time.perf_counter()
        return _wrap_lp_result(lp, _engine(lp, opts).solve(), lp, t0)
    if opts.branching == "most-violated-complementarity":
        raise ValueError("complementarity branching needs a pair-carrying model")
    cols = np.asarray(binary_cols, dtype=int)
    if np.any(lp.lb[cols] < -1e-12) or np.any(lp.ub[cols] > 1.0 + 1e-12):
        raise ValueError("binary columns must carry [0, 1] bounds")
    return _branch_and_bound(lp, opts, _classify_plain_binary(lp, cols), lp)


def solve_lpcc(mpec: MpecModel, options: SolveOptions | None = None) -> SolveResult:
    """Complementarity branching on the pair list, no big-M constants.

    Each node either zeroes a pair's multiplier or pins its row to
    equality, so every root-to-leaf path fixes a strictly growing set of
    columns and the tree is finite.
    """
    opts = options or SolveOptions()
    if opts.branching == "most-fractional":
        raise ValueError("no binaries to branch on; use complementarity branching")
    heur = _DivisionHeuristic(mpec, mpec.lp)
    result = _branch_and_bound(mpec.lp, opts, _classify_lpcc(mpec, opts),
                               mpec, heuristic=heur)
    if result.x is not None:
        polished = _polish_duals(mpec, result.x, feas_lp=mpec.lp)
        if polished is not None:
            result = _replace_x(result, polished)
    return result


def _replace_x(result: SolveResult, x: np.ndarray) -> SolveResult:
    return SolveResult(
        status=result.status, x=x, objective=result.objective,
        best_bound=result.best_bound, gap=result.gap,
        node_count=result.node_count, wall_time=result.wall_time,
        iterations=result.iterations, model=result.model,
        dual_g=result.dual_g, dual_h=result.dual_h,
        bound_history=result.bound_history,
        incumbent_history=result.incumbent_history,
    )


def _polish_duals(mpec: MpecModel, x: np.ndarray, feas_lp: LinearProgram,
                  u_cols=None, act_tol: float = 1e-6) -> np.ndarray | None:
    """Recompute each party's multipliers as the smallest nonnegative
    solution of its stationarity system supported on active rows.

    Branching tolerances leave multipliers complementary only up to
    feas_tol; this cleanup restores exact complementarity where possible.
    Returns the rewritten point, or None if the original should stand.
    """
    lp = mpec.lp
    bg = lp.b_g()
    bh = lp.b_h()
    out = x.copy()
    for lay in mpec.parties():
        rows = range(lay.g0, lay.g0 + lay.nw)
        slack = np.array([row_value(lp, i, x) for i in rows])
        scale = 1.0 + float(np.abs(bg[lay.g0: lay.g0 + lay.nw]).max(initial=0.0))
        stat = np.zeros((lay.nx, lay.nw + lay.nv))
        rhs = np.empty(lay.nx)
        for k in range(lay.nx):
            r = lay.stat0 + k
            for j, vv in zip(lp.h_idx[r], lp.h_val[r]):
                if lay.w0 <= j < lay.w0 + lay.nw:
                    stat[k, j - lay.w0] = vv
                elif lay.v0 <= j < lay.v0 + lay.nv:
                    stat[k, lay.nw + (j - lay.v0)] = vv
                else:
                    return None  # foreign column in a stationarity row
            rhs[k] = bh[r]
        sub_sol = None
        for tol in (act_tol, act_tol * 100.0):
            ub = np.where(slack <= tol * scale, np.inf, 0.0)
            sub = make_lp(
                c=np.concatenate([np.ones(lay.nw), np.zeros(lay.nv)]),
                a_eq=stat, b_eq=rhs,
                lb=np.concatenate([np.zeros(lay.nw), np.full(lay.nv, -np.inf)]),
                ub=np.concatenate([ub, np.full(lay.nv, np.inf)]),
                name=f"{lay.tag}polish",
            )
            cand = solve_lp_engine(sub)
            if cand.status == "optimal":
                sub_sol = cand
                break
        if sub_sol is None:
            continue  # keep this party's multipliers as solved
        out[lay.w0: lay.w0 + lay.nw] = sub_sol.x[: lay.nw]
        out[lay.v0: lay.v0 + lay.nv] = sub_sol.x[lay.nw:]
    if u_cols is not None:  # binary columns present, re-settle them
        for q, (w_col, g_row) in enumerate(mpec.pairs):
            s = row_value(lp, g_row, out)
            out[u_cols[q]] = 1.0 if out[w_col] > s else 0.0
    if not evaluate(feas_lp, out).feasible(1e-6):
        return None
    return out


def extract_solution(result: SolveResult, instance: Instance):
    """Unpack a division-model result into typed schedule objects.

    Verifies every schedule invariant before returning; a failure here
    means the solver produced garbage and is raised, not papered over.
    Returns (division, schedules, duals) with duals keyed by party tag.
    """
    model = result.model
    if isinstance(model, MilpModel):
        mpec = model.mpec
    elif isinstance(model, MpecModel):
        mpec = model
    else:
        raise TypeError("result does not carry a division model")
    if result.x is None:
        raise ValueError(f"no solution to extract (status {result.status})")
    x = result.x
    inst = instance
    t = inst.grid.slot_count
    n = inst.customer_count
    scale = max(1.0, inst.storage.total_capacity,
                float(inst.loads.system_load.max(initial=0.0)))

    def snap(a):
        a = np.asarray(a, float).copy()
        a[np.abs(a) <= 1e-9 * scale] = 0.0
        return a

    division = Division(
        s_disco=float(snap(x[mpec.div_disco_col])),
        s_customer=snap(x[mpec.div_cust_cols]),
    )
    ch = np.empty((n, t))
    dis = np.empty((n, t))
    peak = np.empty(n)
    valley = np.empty(n)
    for i, lay in enumerate(mpec.customers):
        ch[i] = snap(x[lay.x0: lay.x0 + t])
        dis[i] = snap(x[lay.x0 + t: lay.x0 + 2 * t])
        peak[i] = x[lay.x0 + 2 * t]
        valley[i] = x[lay.x0 + 2 * t + 1]
    d = mpec.disco
    schedules = ScheduleSet(
        customer_ch=ch,
        customer_dis=dis,
        disco_ch=snap(x[d.x0: d.x0 + t]),
        disco_dis=snap(x[d.x0 + t: d.x0 + 2 * t]),
        customer_peak=peak,
        customer_valley=valley,
        system_peak=float(x[mpec.peak_col]),
    )
    report = check_schedule_invariants(inst, division, schedules, tol=1e-6)
    if not report.passed:
        raise RuntimeError(f"solution violates schedule invariants: {report.failures()}")
    duals = {}
    for lay in mpec.parties():
        duals[lay.tag.rstrip(".")] = {
            "omega": x[lay.w0: lay.w0 + lay.nw].copy(),
            "v": x[lay.v0: lay.v0 + lay.nv].copy(),
        }
    return division, schedules, duals
