"""Single-level reformulation of the storage-division problem.

Each party's dispatch LP is replaced by its optimality conditions:
stationarity ties the duals to the objective gradient, the original rows
stay as primal feasibility, and every inequality row is paired with its
multiplier for complementarity. Embedding those systems under the division
constraints and the peak epigraph yields one model whose only nonlinearity
is the pair condition omega_i * g_i = 0; linearize_big_m swaps each pair
for the two bound rows with an auxiliary 0-1 variable.

The derivation is mechanical from LP data. Nothing here knows about slots
or batteries beyond the capacity markers (g_cap) that re-link a party's
rows to its division variable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance
from .lp import LinearProgram, build_llm_c, build_llm_d


@dataclass(frozen=True)
class KktSystem:
    """Optimality system of one lower-level LP.

    Stationarity row j (one per primal variable):
        sum_i A_g[i, j] * omega_i + sum_m A_h[m, j] * v_m = c_j
    plus omega >= 0, the primal rows verbatim, and one complementarity
    pair per inequality row.
    """

    lp: LinearProgram
    stat_g_idx: tuple  # per variable: inequality-row ids with nonzero gradient
    stat_g_val: tuple
    stat_h_idx: tuple
    stat_h_val: tuple
    rhs: np.ndarray  # = lp.c
    pair_names: tuple

    @property
    def n_x(self) -> int:
        return self.lp.n_vars

    @property
    def n_omega(self) -> int:
        return self.lp.n_g

    @property
    def n_v(self) -> int:
        return self.lp.n_h


@dataclass(frozen=True)
class PartyLayout:
    """Column/row addresses of one embedded optimality system."""

    tag: str
    x0: int
    nx: int
    w0: int
    nw: int
    v0: int
    nv: int
    g0: int  # first primal inequality row in the joint model
    stat0: int  # first stationarity equality row
    bal0: int  # energy balance equality row
    cap_col: int  # division variable this party's rows are linked to
    t_slots: int


@dataclass(frozen=True)
class MpecModel:
    """Joint model: upper rows + every party's optimality system.

    lp holds all linear rows (the complementarity pairs are NOT rows);
    pairs lists (omega column, inequality row) index pairs that must
    multiply to zero. Column order: peak, s_disco, s_customer[0..N-1],
    then per party its primal block, multiplier block, balance multiplier.
    """

    instance: Instance
    lp: LinearProgram
    pairs: tuple  # ((omega_col, g_row), ...)
    peak_col: int
    div_disco_col: int
    div_cust_cols: np.ndarray
    customers: tuple  # PartyLayout per customer
    disco: "PartyLayout"

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def parties(self):
        return list(self.customers) + [self.disco]


@dataclass(frozen=True)
class BigMPolicy:
    """How the pair bounds of the linearization are sized.

    Primal-side bounds come from per-family interval analysis of the row's
    range over the feasible set, inflated by primal_safety plus a floor so
    legitimately tight rows do not sit on the bound. Dual-side bounds cannot
    be derived from problem data, so they default to dual_scale times the
    price magnitude; escalation re-solves with bigger M when validation
    flags binding.
    """

    primal_safety: float = 1.25
    primal_floor: float = 1.0
    dual_scale: float = 1000.0
    dual_floor: float = 1.0
    escalation: float = 10.0
    max_rounds: int = 3

    def check(self):
        vals = [self.primal_safety, self.primal_floor, self.dual_scale,
                self.dual_floor, self.escalation]
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise ValueError("big-M policy values must be positive and finite")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        return self


@dataclass(frozen=True)
class MilpModel:
    """Mixed-binary form: MPEC rows plus, per pair p with binary u_p,
    m_omega[p]: M_w*u_p - omega >= 0  and  m_slack[p]: M_g*(1-u_p) - g >= 0."""

    mpec: MpecModel
    lp: LinearProgram
    binary_cols: np.ndarray
    pairs: tuple
    m_omega: np.ndarray
    m_slack: np.ndarray
    m_notes: tuple
    pair_row0: int  # pair p's rows sit at pair_row0 + 2p (+1)

    @property
    def n_binaries(self) -> int:
        return len(self.binary_cols)


def _transpose(idx_list, val_list, n_rows, n_cols):
    """Per-column (row ids, values) views of a sparse row collection."""
    if n_rows == 0:
        empty_i = np.empty(0, dtype=np.int64)
        empty_v = np.empty(0)
        return [empty_i] * n_cols, [empty_v] * n_cols
    lens = np.fromiter((len(i) for i in idx_list), int, count=n_rows)
    rows = np.repeat(np.arange(n_rows), lens)
    cols = np.concatenate(idx_list)
    vals = np.concatenate(val_list)
    order = np.lexsort((rows, cols))
    cols_s = cols[order]
    rows_s = rows[order]
    vals_s = vals[order]
    cuts = np.searchsorted(cols_s, np.arange(n_cols + 1))
    per_rows = [rows_s[cuts[j]: cuts[j + 1]] for j in range(n_cols)]
    per_vals = [vals_s[cuts[j]: cuts[j + 1]] for j in range(n_cols)]
    return per_rows, per_vals


def derive_kkt(lp: LinearProgram) -> KktSystem:
    """Optimality system of an LP whose limits are all written as rows.

    Finite variable bounds would need their own multipliers, which the
    generated stationarity rows deliberately omit; such LPs are rejected.
    """
    if np.any(np.isfinite(lp.lb)) or np.any(np.isfinite(lp.ub)):
        raise ValueError(
            "derive_kkt needs an all-rows LP (finite variable bounds present)"
        )
    g_rows, g_vals = _transpose(lp.g_idx, lp.g_val, lp.n_g, lp.n_vars)
    h_rows, h_vals = _transpose(lp.h_idx, lp.h_val, lp.n_h, lp.n_vars)
    return KktSystem(
        lp=lp,
        stat_g_idx=tuple(g_rows),
        stat_g_val=tuple(g_vals),
        stat_h_idx=tuple(h_rows),
        stat_h_val=tuple(h_vals),
        rhs=lp.c,
        pair_names=lp.g_names,
    )


def assemble_mpec(instance: Instance) -> MpecModel:
    """Join the division problem and every party's optimality system."""
    n_cust = instance.customer_count
    t = instance.grid.slot_count
    dt = instance.grid.slot_hours
    s_total = instance.storage.total_capacity
    w = instance.weights

    party_lps = [build_llm_c(instance, n, 0.0) for n in range(n_cust)]
    party_lps.append(build_llm_d(instance, 0.0))

    names = ["peak", "s_d"] + [f"s_c[{n}]" for n in range(n_cust)]
    col = 2 + n_cust
    layouts = []
    g_count = 1 + t  # capacity split + peak epigraph, placed first
    h_count = 0
    for p, plp in enumerate(party_lps):
        tag = f"c{p}." if p < n_cust else "d."
        x0, col = col, col + plp.n_vars
        w0, col = col, col + plp.n_g
        v0, col = col, col + plp.n_h
        names.extend(tag + nm for nm in plp.var_names)
        names.extend(f"{tag}w.{nm}" for nm in plp.g_names)
        names.extend(f"{tag}v.{nm}" for nm in plp.h_names)
        layouts.append(
            PartyLayout(
                tag=tag, x0=x0, nx=plp.n_vars, w0=w0, nw=plp.n_g,
                v0=v0, nv=plp.n_h, g0=g_count,
                stat0=h_count, bal0=h_count + plp.n_vars,
                cap_col=(2 + p) if p < n_cust else 1, t_slots=t,
            )
        )
        g_count += plp.n_g
        h_count += plp.n_vars + plp.n_h
    n_cols = col

    lb = np.full(n_cols, -np.inf)
    ub = np.full(n_cols, np.inf)
    lb[1: 2 + n_cust] = 0.0
    ub[1: 2 + n_cust] = s_total
    c = np.zeros(n_cols)
    c[0] = w.lambda1
    flow_price = (w.lambda2 * instance.prices.lmp + w.lambda3 * instance.prices.tou) * dt
    for lay in layouts:
        lb[lay.w0: lay.w0 + lay.nw] = 0.0
        c[lay.x0: lay.x0 + t] = flow_price
        c[lay.x0 + t: lay.x0 + 2 * t] = -flow_price
    constant = float(flow_price @ instance.loads.system_load)

    g_idx, g_val, g_off, g_names = [], [], [], []
    # capacity split: s_total - s_d - sum s_n >= 0
    g_idx.append(np.arange(1, 2 + n_cust))
    g_val.append(np.full(1 + n_cust, -1.0))
    g_off.append(-s_total)
    g_names.append("capacity_split")
    # peak epigraph rows: peak - sum of all storage flows >= original load
    for ts in range(t):
        cols = [0]
        vals = [1.0]
        for lay in layouts:
            cols += [lay.x0 + ts, lay.x0 + t + ts]
            vals += [-1.0, 1.0]
        g_idx.append(np.array(cols))
        g_val.append(np.array(vals))
        g_off.append(float(instance.loads.system_load[ts]))
        g_names.append(f"peak_row[{ts}]")

    h_idx, h_val, h_off, h_names = [], [], [], []
    pairs = []
    for lay, plp in zip(layouts, party_lps):
        # stationarity: one equality per primal variable, gradient transposed
        tg_i, tg_v = _transpose(plp.g_idx, plp.g_val, plp.n_g, plp.n_vars)
        th_i, th_v = _transpose(plp.h_idx, plp.h_val, plp.n_h, plp.n_vars)
        for j in range(plp.n_vars):
            h_idx.append(np.concatenate([tg_i[j] + lay.w0, th_i[j] + lay.v0]))
            h_val.append(np.concatenate([tg_v[j], th_v[j]]))
            h_off.append(float(plp.c[j]))
            h_names.append(f"{lay.tag}stat.{plp.var_names[j]}")
        # primal rows, capacity markers re-linked to the division variable
        for i in range(plp.n_g):
            cap = plp.g_cap[i]
            if cap != 0.0:
                g_idx.append(np.concatenate([plp.g_idx[i] + lay.x0, [lay.cap_col]]))
                g_val.append(np.concatenate([plp.g_val[i], [-cap]]))
            else:
                g_idx.append(plp.g_idx[i] + lay.x0)
                g_val.append(plp.g_val[i])
            g_off.append(float(plp.g_offset[i]))
            g_names.append(lay.tag + plp.g_names[i])
            pairs.append((lay.w0 + i, lay.g0 + i))
        for m in range(plp.n_h):
            cap = plp.h_cap[m]
            if cap != 0.0:
                h_idx.append(np.concatenate([plp.h_idx[m] + lay.x0, [lay.cap_col]]))
                h_val.append(np.concatenate([plp.h_val[m], [-cap]]))
            else:
                h_idx.append(plp.h_idx[m] + lay.x0)
                h_val.append(plp.h_val[m])
            h_off.append(float(plp.h_offset[m]))
            h_names.append(lay.tag + plp.h_names[m])

    lp = LinearProgram(
        name="division_mpec",
        var_names=tuple(names),
        c=c,
        lb=lb,
        ub=ub,
        g_idx=tuple(g_idx),
        g_val=tuple(g_val),
        g_offset=np.array(g_off),
        g_cap=np.zeros(len(g_idx)),
        g_names=tuple(g_names),
        h_idx=tuple(h_idx),
        h_val=tuple(h_val),
        h_offset=np.array(h_off),
        h_cap=np.zeros(len(h_idx)),
        h_names=tuple(h_names),
        objective_constant=constant,
    )
    return MpecModel(
        instance=instance,
        lp=lp,
        pairs=tuple(pairs),
        peak_col=0,
        div_disco_col=1,
        div_cust_cols=np.arange(2, 2 + n_cust),
        customers=tuple(layouts[:n_cust]),
        disco=layouts[n_cust],
    )


def _primal_row_bound(family: str, instance: Instance, load: np.ndarray):
    """Upper bound on a primal row's slack over the feasible set."""
    st = instance.storage
    span = st.total_capacity
    if family in ("soc_min", "soc_max"):
        return (st.soc_upper - st.soc_lower) * span
    if family in ("dis_nonneg", "ch_nonneg", "dis_cap", "ch_cap"):
        return st.power_ratio * span
    if family in ("peak_def", "valley_def"):
        return 2.0 * float(load.max()) + 2.0 * st.power_ratio * span
    return None


def linearize_big_m(mpec: MpecModel, policy: BigMPolicy | None = None) -> MilpModel:
    """Swap each complementarity pair for the classic two bound rows."""
    policy = (policy or BigMPolicy()).check()
    inst = mpec.instance
    base = mpec.lp
    n_pairs = len(mpec.pairs)
    n0 = base.n_vars
    dt = inst.grid.slot_hours
    dual_m = max(
        policy.dual_floor,
        policy.dual_scale
        * max(
            float(np.abs(inst.prices.lmp).max()),
            float(inst.prices.tou.max()),
            inst.weights.alpha,
        )
        * dt,
    )

    m_omega = np.full(n_pairs, dual_m)
    m_slack = np.empty(n_pairs)
    notes = []
    p = 0
    for k, lay in enumerate(mpec.parties()):
        load = (
            inst.loads.customer_load[k]
            if k < inst.customer_count
            else inst.loads.system_load
        )
        for i in range(lay.nw):
            family = base.g_names[lay.g0 + i].split(".", 1)[1].split("[")[0]
            bound = _primal_row_bound(family, inst, load)
            if bound is None or not np.isfinite(bound):
                notes.append((p, family, "no interval bound, using dual default"))
                m_slack[p] = dual_m
            else:
                m_slack[p] = policy.primal_safety * bound + policy.primal_floor
            p += 1

    names = list(base.var_names) + [f"u[{q}]" for q in range(n_pairs)]
    lb = np.concatenate([base.lb, np.zeros(n_pairs)])
    ub = np.concatenate([base.ub, np.ones(n_pairs)])
    c = np.concatenate([base.c, np.zeros(n_pairs)])
    g_idx = list(base.g_idx)
    g_val = list(base.g_val)
    g_off = list(base.g_offset)
    g_names = list(base.g_names)
    pair_row0 = len(g_idx)
    for q, (w_col, g_row) in enumerate(mpec.pairs):
        u_col = n0 + q
        g_idx.append(np.array([w_col, u_col]))
        g_val.append(np.array([-1.0, m_omega[q]]))
        g_off.append(0.0)
        g_names.append(f"m_omega[{q}]")
        g_idx.append(np.concatenate([base.g_idx[g_row], [u_col]]))
        g_val.append(np.concatenate([-base.g_val[g_row], [-m_slack[q]]]))
        g_off.append(-m_slack[q] - float(base.g_offset[g_row]))
        g_names.append(f"m_slack[{q}]")

    lp = LinearProgram(
        name="division_milp",
        var_names=tuple(names),
        c=c,
        lb=lb,
        ub=ub,
        g_idx=tuple(g_idx),
        g_val=tuple(g_val),
        g_offset=np.array(g_off),
        g_cap=np.zeros(len(g_idx)),
        g_names=tuple(g_names),
        h_idx=base.h_idx,
        h_val=base.h_val,
        h_offset=base.h_offset,
        h_cap=base.h_cap,
        h_names=base.h_names,
        objective_constant=base.objective_constant,
    )
    return MilpModel(
        mpec=mpec,
        lp=lp,
        binary_cols=np.arange(n0, n0 + n_pairs),
        pairs=mpec.pairs,
        m_omega=m_omega,
        m_slack=m_slack,
        m_notes=tuple(notes),
        pair_row0=pair_row0,
    )


def row_value(lp: LinearProgram, i: int, x: np.ndarray) -> float:
    """Slack of inequality row i at x (row lhs minus rhs)."""
    return float(lp.g_val[i] @ x[lp.g_idx[i]]) - float(lp.b_g()[i])


@dataclass(frozen=True)
class BigMReport:
    """Pairs whose multiplier or slack sits within tol*M of its cap."""

    flagged: tuple  # (pair index, side, value, m)
    tol: float

    @property
    def clean(self) -> bool:
        return len(self.flagged) == 0


def validate_big_m(milp: MilpModel, solution: np.ndarray, tol: float = 0.05) -> BigMReport:
    """Certify that no pair bound truncated the solution.

    A multiplier (or row slack) within tol*M of its M is evidence the
    constant was too small; an empty report means the linearization did
    not bite.
    """
    x = np.asarray(solution, float)
    flagged = []
    for q, (w_col, g_row) in enumerate(milp.pairs):
        omega = float(x[w_col])
        slack = row_value(milp.mpec.lp, g_row, x)
        if milp.m_omega[q] - omega <= tol * milp.m_omega[q]:
            flagged.append((q, "omega", omega, float(milp.m_omega[q])))
        if milp.m_slack[q] - slack <= tol * milp.m_slack[q]:
            flagged.append((q, "slack", slack, float(milp.m_slack[q])))
    return BigMReport(flagged=tuple(flagged), tol=tol)
