"""Lower-level dispatch problems in explicit LP form.

Each party's day-ahead dispatch is assembled as an inequality/equality
system A_g x >= b_g, A_h x = b_h with every sign and capacity limit written
as a row (the variables themselves stay free). Keeping limits as rows means
each row carries exactly one multiplier in the optimality system, in a fixed
catalog order the reformulation depends on:

    family 1..6, per slot: soc_min, soc_max, dis_nonneg, ch_nonneg,
                           dis_cap, ch_cap
    customers add per slot: peak_def (7), valley_def (8)
    plus one energy_balance equality.

Right-hand sides are stored as offset + cap_coef * capacity so a row stays
valid symbolically when the owner's capacity later becomes a decision
variable instead of a number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance


@dataclass(frozen=True)
class LinearProgram:
    """min c.x + constant  s.t.  A_g x >= b_g,  A_h x = b_h,  lb <= x <= ub.

    Rows are sparse: g_idx[i]/g_val[i] hold the column indices and
    coefficients of inequality row i. b_g = g_offset + g_cap * capacity,
    likewise for equalities. Nonzero entries of g_cap/h_cap mark the rows
    that move with the owner's capacity.
    """

    name: str
    var_names: tuple
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    g_idx: tuple
    g_val: tuple
    g_offset: np.ndarray
    g_cap: np.ndarray
    g_names: tuple
    h_idx: tuple
    h_val: tuple
    h_offset: np.ndarray
    h_cap: np.ndarray
    h_names: tuple
    capacity: float = 0.0
    objective_constant: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_g(self) -> int:
        return len(self.g_idx)

    @property
    def n_h(self) -> int:
        return len(self.h_idx)

    def b_g(self) -> np.ndarray:
        return self.g_offset + self.g_cap * self.capacity

    def b_h(self) -> np.ndarray:
        return self.h_offset + self.h_cap * self.capacity

    def dense_g(self) -> np.ndarray:
        a = np.zeros((self.n_g, self.n_vars))
        for i, (idx, val) in enumerate(zip(self.g_idx, self.g_val)):
            a[i, idx] = val
        return a

    def dense_h(self) -> np.ndarray:
        a = np.zeros((self.n_h, self.n_vars))
        for i, (idx, val) in enumerate(zip(self.h_idx, self.h_val)):
            a[i, idx] = val
        return a


@dataclass
class LpSolution:
    """Primal/dual output of one LP solve.

    dual_g holds one nonnegative multiplier per inequality row, dual_h one
    free multiplier per equality row; reduced_costs cover the structural
    variables (nonzero only off-basis).
    """

    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray
    objective: float
    dual_g: np.ndarray
    dual_h: np.ndarray
    reduced_costs: np.ndarray
    iterations: int


@dataclass(frozen=True)
class LpEvaluation:
    objective: float
    min_inequality_slack: float
    max_equality_residual: float
    min_bound_slack: float

    def feasible(self, tol: float = 1e-6) -> bool:
        return (
            self.min_inequality_slack >= -tol
            and self.max_equality_residual <= tol
            and self.min_bound_slack >= -tol
        )


def evaluate(lp: LinearProgram, x: np.ndarray) -> LpEvaluation:
    """Objective and worst-case feasibility residuals of a candidate point."""
    x = np.asarray(x, float)
    obj = float(lp.c @ x) + lp.objective_constant
    if lp.n_g:
        slacks = np.array(
            [float(v @ x[i]) for i, v in zip(lp.g_idx, lp.g_val)]
        ) - lp.b_g()
        min_g = float(slacks.min())
    else:
        min_g = np.inf
    if lp.n_h:
        resid = np.array(
            [float(v @ x[i]) for i, v in zip(lp.h_idx, lp.h_val)]
        ) - lp.b_h()
        max_h = float(np.abs(resid).max())
    else:
        max_h = 0.0
    bound = np.inf
    finite_lb = np.isfinite(lp.lb)
    finite_ub = np.isfinite(lp.ub)
    if finite_lb.any():
        bound = min(bound, float((x - lp.lb)[finite_lb].min()))
    if finite_ub.any():
        bound = min(bound, float((lp.ub - x)[finite_ub].min()))
    return LpEvaluation(obj, min_g, max_h, bound)


def _storage_rows(t_slots: int, dt: float, eta_ch: float, eta_dis: float,
                  power_ratio: float, soc_lower: float, soc_upper: float,
                  soc_ini: float, ch0: int, dis0: int):
    """Rows 1..6 of the catalog for one battery share.

    ch0/dis0 are the column indices of ch_0 and dis_0. Returns parallel
    lists (idx, val, offset, cap, name) in family-major slot-minor order.
    """
    idx, val, off, cap, names = [], [], [], [], []
    ch_cols = np.arange(ch0, ch0 + t_slots)
    dis_cols = np.arange(dis0, dis0 + t_slots)
    # stored energy through slot t: cumulative charge minus discharge
    for fam, sign, bound, tag in (
        (1, 1.0, soc_lower - soc_ini, "soc_min"),
        (2, -1.0, soc_ini - soc_upper, "soc_max"),
    ):
        for t in range(t_slots):
            cols = np.concatenate([ch_cols[: t + 1], dis_cols[: t + 1]])
            vals = np.concatenate(
                [
                    np.full(t + 1, sign * dt * eta_ch),
                    np.full(t + 1, -sign * dt / eta_dis),
                ]
            )
            idx.append(cols)
            val.append(vals)
            off.append(0.0)
            cap.append(bound)
            names.append(f"{tag}[{t}]")
    for t in range(t_slots):  # dis_nonneg
        idx.append(np.array([dis_cols[t]]))
        val.append(np.array([1.0]))
        off.append(0.0)
        cap.append(0.0)
        names.append(f"dis_nonneg[{t}]")
    for t in range(t_slots):  # ch_nonneg
        idx.append(np.array([ch_cols[t]]))
        val.append(np.array([1.0]))
        off.append(0.0)
        cap.append(0.0)
        names.append(f"ch_nonneg[{t}]")
    for t in range(t_slots):  # dis_cap: k*S - dis_t >= 0
        idx.append(np.array([dis_cols[t]]))
        val.append(np.array([-1.0]))
        off.append(0.0)
        cap.append(-power_ratio)
        names.append(f"dis_cap[{t}]")
    for t in range(t_slots):  # ch_cap
        idx.append(np.array([ch_cols[t]]))
        val.append(np.array([-1.0]))
        off.append(0.0)
        cap.append(-power_ratio)
        names.append(f"ch_cap[{t}]")
    return idx, val, off, cap, names


def _balance_row(t_slots: int, dt: float, eta_ch: float, eta_dis: float,
                 ch0: int, dis0: int):
    """Daily energy neutrality: stored energy returns to its start."""
    cols = np.concatenate(
        [np.arange(ch0, ch0 + t_slots), np.arange(dis0, dis0 + t_slots)]
    )
    vals = np.concatenate(
        [np.full(t_slots, dt * eta_ch), np.full(t_slots, -dt / eta_dis)]
    )
    return cols, vals


def build_llm_c(instance: Instance, customer_index: int, capacity: float) -> LinearProgram:
    """Customer dispatch LP for a given battery share (kWh).

    Variables: ch_0..ch_{T-1}, dis_0..dis_{T-1}, peak, valley (2T+2, free).
    Rows: families 1..8 slot by slot (8T inequalities) plus the energy
    balance equality. Objective: retail cost increment of the storage flows
    plus alpha * (peak - valley).
    """
    if not 0 <= customer_index < instance.customer_count:
        raise IndexError(f"customer index {customer_index} out of range")
    if capacity < 0:
        raise ValueError(f"capacity must be >= 0, got {capacity}")
    t_slots = instance.grid.slot_count
    dt = instance.grid.slot_hours
    st = instance.storage
    load = instance.loads.customer_load[customer_index]
    peak_col = 2 * t_slots
    valley_col = 2 * t_slots + 1

    c = np.zeros(2 * t_slots + 2)
    c[:t_slots] = instance.prices.tou * dt
    c[t_slots : 2 * t_slots] = -instance.prices.tou * dt
    c[peak_col] = instance.weights.alpha
    c[valley_col] = -instance.weights.alpha

    idx, val, off, cap, names = _storage_rows(
        t_slots, dt, st.eta_ch, st.eta_dis, st.power_ratio,
        st.soc_lower, st.soc_upper, float(st.soc_ini_customer[customer_index]),
        ch0=0, dis0=t_slots,
    )
    for t in range(t_slots):  # peak_def: peak - ch_t + dis_t >= load_t
        idx.append(np.array([peak_col, t, t_slots + t]))
        val.append(np.array([1.0, -1.0, 1.0]))
        off.append(float(load[t]))
        cap.append(0.0)
        names.append(f"peak_def[{t}]")
    for t in range(t_slots):  # valley_def: ch_t - dis_t - valley >= -load_t
        idx.append(np.array([t, t_slots + t, valley_col]))
        val.append(np.array([1.0, -1.0, -1.0]))
        off.append(-float(load[t]))
        cap.append(0.0)
        names.append(f"valley_def[{t}]")

    h_cols, h_vals = _balance_row(t_slots, dt, st.eta_ch, st.eta_dis, 0, t_slots)
    nv = 2 * t_slots + 2
    return LinearProgram(
        name=f"llm_c[{customer_index}]",
        var_names=tuple(
            [f"ch[{t}]" for t in range(t_slots)]
            + [f"dis[{t}]" for t in range(t_slots)]
            + ["peak", "valley"]
        ),
        c=c,
        lb=np.full(nv, -np.inf),
        ub=np.full(nv, np.inf),
        g_idx=tuple(idx),
        g_val=tuple(val),
        g_offset=np.array(off),
        g_cap=np.array(cap),
        g_names=tuple(names),
        h_idx=(h_cols,),
        h_val=(h_vals,),
        h_offset=np.zeros(1),
        h_cap=np.zeros(1),
        h_names=("energy_balance",),
        capacity=float(capacity),
    )


def build_llm_d(instance: Instance, capacity: float) -> LinearProgram:
    """Distribution-company dispatch LP for its battery share.

    Variables: ch_0..ch_{T-1}, dis_0..dis_{T-1} (2T, free). Rows: families
    1..6 slot by slot (6T inequalities) plus the energy balance equality.
    Objective: wholesale cost increment of the storage flows.
    """
    if capacity < 0:
        raise ValueError(f"capacity must be >= 0, got {capacity}")
    t_slots = instance.grid.slot_count
    dt = instance.grid.slot_hours
    st = instance.storage

    c = np.zeros(2 * t_slots)
    c[:t_slots] = instance.prices.lmp * dt
    c[t_slots:] = -instance.prices.lmp * dt

    idx, val, off, cap, names = _storage_rows(
        t_slots, dt, st.eta_ch, st.eta_dis, st.power_ratio,
        st.soc_lower, st.soc_upper, st.soc_ini_disco, ch0=0, dis0=t_slots,
    )
    h_cols, h_vals = _balance_row(t_slots, dt, st.eta_ch, st.eta_dis, 0, t_slots)
    nv = 2 * t_slots
    return LinearProgram(
        name="llm_d",
        var_names=tuple(
            [f"ch[{t}]" for t in range(t_slots)]
            + [f"dis[{t}]" for t in range(t_slots)]
        ),
        c=c,
        lb=np.full(nv, -np.inf),
        ub=np.full(nv, np.inf),
        g_idx=tuple(idx),
        g_val=tuple(val),
        g_offset=np.array(off),
        g_cap=np.array(cap),
        g_names=tuple(names),
        h_idx=(h_cols,),
        h_val=(h_vals,),
        h_offset=np.zeros(1),
        h_cap=np.zeros(1),
        h_names=("energy_balance",),
        capacity=float(capacity),
    )


def make_lp(
    c,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
    lb=None,
    ub=None,
    name="lp",
    var_names=None,
    objective_constant=0.0,
) -> LinearProgram:
    """General-purpose constructor from dense data, a_ub x >= b_ub rows.

    Used for tests and toy models; zero coefficients are dropped so the
    sparse invariant (no explicit zeros) holds.
    """
    c = np.asarray(c, float)
    n = len(c)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)

    def sparsify(a):
        rows_i, rows_v = [], []
        for row in np.atleast_2d(np.asarray(a, float)):
            nz = np.nonzero(row)[0]
            rows_i.append(nz)
            rows_v.append(row[nz])
        return tuple(rows_i), tuple(rows_v)

    if a_ub is not None and len(np.atleast_2d(a_ub)):
        g_idx, g_val = sparsify(a_ub)
        g_off = np.asarray(b_ub, float)
    else:
        g_idx, g_val, g_off = (), (), np.zeros(0)
    if a_eq is not None and len(np.atleast_2d(a_eq)):
        h_idx, h_val = sparsify(a_eq)
        h_off = np.asarray(b_eq, float)
    else:
        h_idx, h_val, h_off = (), (), np.zeros(0)
    return LinearProgram(
        name=name,
        var_names=tuple(var_names) if var_names else tuple(f"x[{j}]" for j in range(n)),
        c=c,
        lb=lb,
        ub=ub,
        g_idx=g_idx,
        g_val=g_val,
        g_offset=g_off,
        g_cap=np.zeros(len(g_idx)),
        g_names=tuple(f"r[{i}]" for i in range(len(g_idx))),
        h_idx=h_idx,
        h_val=h_val,
        h_offset=h_off,
        h_cap=np.zeros(len(h_idx)),
        h_names=tuple(f"e[{i}]" for i in range(len(h_idx))),
        objective_constant=objective_constant,
    )
