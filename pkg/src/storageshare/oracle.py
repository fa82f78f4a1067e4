"""Brute-force and residual machinery that certifies division solutions
without trusting the reformulation or the branching solvers.

grid_oracle enumerates capacity divisions on a regular grid, solves every
party's dispatch LP independently per capacity value (cached: a party's
problem depends only on its own share), applies optimistic tie resolution,
and evaluates the division objective directly from schedules. The checkers
compute optimality-system and schedule residuals from raw data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import Division, Instance, ScheduleSet, soc_trajectory
from .lp import LinearProgram, build_llm_c, build_llm_d, evaluate
from .mpec import KktSystem
from .simplex import Simplex, solve_lp_engine

GRID_GUARD = 200_000


@dataclass(frozen=True)
class KktReport:
    max_stationarity: float
    min_dual: float
    max_complementarity: float
    max_primal_violation: float

    def passed(self, tol: float) -> bool:
        return (
            self.max_stationarity <= tol
            and self.min_dual >= -tol
            and self.max_complementarity <= tol
            and self.max_primal_violation <= tol
        )


def check_kkt_residuals(kkt: KktSystem, x, omega, v, tol: float = 1e-6):
    """Worst-case residuals of a candidate optimality triple.

    Returns (report, passed). Stationarity is evaluated per primal variable,
    complementarity per inequality row; primal violation covers both row
    types of the source LP.
    """
    x = np.asarray(x, float)
    omega = np.asarray(omega, float)
    v = np.asarray(v, float)
    lp = kkt.lp
    stat = 0.0
    for j in range(kkt.n_x):
        r = float(omega[kkt.stat_g_idx[j]] @ kkt.stat_g_val[j])
        r += float(v[kkt.stat_h_idx[j]] @ kkt.stat_h_val[j])
        stat = max(stat, abs(r - kkt.rhs[j]))
    slack = np.array(
        [float(vv @ x[ii]) for ii, vv in zip(lp.g_idx, lp.g_val)]
    ) - lp.b_g()
    comp = float(np.abs(omega * slack).max()) if lp.n_g else 0.0
    min_dual = float(omega.min()) if lp.n_g else 0.0
    ev = evaluate(lp, x)
    primal = max(0.0, -ev.min_inequality_slack, ev.max_equality_residual)
    report = KktReport(
        max_stationarity=stat,
        min_dual=min_dual,
        max_complementarity=comp,
        max_primal_violation=primal,
    )
    return report, report.passed(tol)


@dataclass(frozen=True)
class InvariantReport:
    items: tuple  # (name, passed, worst_violation)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.items)

    def failures(self):
        return [it for it in self.items if not it[1]]


def check_schedule_invariants(
    instance: Instance,
    division: Division,
    schedules: ScheduleSet,
    tol: float = 1e-6,
) -> InvariantReport:
    """Itemized feasibility audit of a (division, schedules) pair."""
    st = instance.storage
    dt = instance.grid.slot_hours
    items = []

    caps = np.concatenate([[division.s_disco], division.s_customer])
    split = float(caps.sum() - st.total_capacity)
    items.append(("capacity_split", split <= tol and float(caps.min()) >= -tol,
                  max(split, -float(caps.min()))))

    def party(name, cap, ch, dis, soc_ini):
        worst = 0.0
        lo_viol = float(np.max(np.maximum(-ch, -dis), initial=0.0))
        hi_viol = float(
            np.max(np.maximum(ch, dis) - st.power_ratio * cap, initial=0.0)
        )
        worst = max(lo_viol, hi_viol)
        items.append((f"{name}.power_caps", worst <= tol, worst))
        traj = soc_trajectory(st, cap, ch, dis, soc_ini, dt)
        corridor = max(
            float(np.max(cap * st.soc_lower - traj, initial=0.0)),
            float(np.max(traj - cap * st.soc_upper, initial=0.0)),
        )
        items.append((f"{name}.soc_corridor", corridor <= tol, corridor))
        bal = abs(float(traj[-1]) - cap * soc_ini)
        items.append((f"{name}.energy_balance", bal <= tol, bal))

    for n in range(instance.customer_count):
        party(
            f"customer[{n}]",
            float(division.s_customer[n]),
            schedules.customer_ch[n],
            schedules.customer_dis[n],
            float(st.soc_ini_customer[n]),
        )
        net = (
            instance.loads.customer_load[n]
            + schedules.customer_ch[n]
            - schedules.customer_dis[n]
        )
        pk = float(np.max(net - schedules.customer_peak[n]))
        items.append((f"customer[{n}].peak_def", pk <= tol, max(pk, 0.0)))
        vl = float(np.max(schedules.customer_valley[n] - net))
        items.append((f"customer[{n}].valley_def", vl <= tol, max(vl, 0.0)))
    party("disco", division.s_disco, schedules.disco_ch, schedules.disco_dis,
          st.soc_ini_disco)

    net_sys = (
        instance.loads.system_load
        + (schedules.customer_ch - schedules.customer_dis).sum(axis=0)
        + schedules.disco_ch
        - schedules.disco_dis
    )
    over = float(np.max(net_sys) - schedules.system_peak)
    items.append(("system_peak", over <= tol, max(over, 0.0)))
    return InvariantReport(items=tuple(items))


def optimistic_resolve(
    lp: LinearProgram,
    upper_gradient,
    sol=None,
    pin_tol: float | None = None,
) -> np.ndarray:
    """Among the LP's optima, pick the one the division objective likes.

    Solves a second LP minimizing upper_gradient over the optimal face (the
    original objective pinned to its optimum). Raises RuntimeError if the
    pin is violated at the returned point, which would mean the face was
    not actually optimal.
    """
    if sol is None:
        sol = solve_lp_engine(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"cannot resolve a {sol.status} LP")
    f_star = sol.objective - lp.objective_constant  # pin in c.x terms
    pin = max(1e-9, 1e-9 * abs(f_star)) if pin_tol is None else pin_tol
    grad = np.asarray(upper_gradient, float)
    nz = np.nonzero(lp.c)[0]
    pinned = LinearProgram(
        name=lp.name + "+pin",
        var_names=lp.var_names,
        c=grad,
        lb=lp.lb,
        ub=lp.ub,
        g_idx=lp.g_idx + (nz,),
        g_val=lp.g_val + (-lp.c[nz],),
        g_offset=np.concatenate([lp.g_offset, [-(f_star + pin)]]),
        g_cap=np.concatenate([lp.g_cap, [0.0]]),
        g_names=lp.g_names + ("objective_pin",),
        h_idx=lp.h_idx,
        h_val=lp.h_val,
        h_offset=lp.h_offset,
        h_cap=lp.h_cap,
        h_names=lp.h_names,
        capacity=lp.capacity,
        objective_constant=0.0,
    )
    res = solve_lp_engine(pinned)
    if res.status != "optimal":
        raise RuntimeError(f"resolve LP ended {res.status}")
    drift = float(lp.c @ res.x) - (f_star + pin)
    if drift > 1e-9 * (1.0 + abs(f_star)):
        raise RuntimeError(f"objective pin violated by {drift}")
    return res.x


@dataclass(frozen=True)
class OracleReport:
    best_division: Division
    best_objective: float
    records: tuple  # (division tuple, per-party lower objectives, upper objective)
    notes: tuple
    grid_step: float


@dataclass(frozen=True)
class _Dispatch:
    """Cached LLM outcome for one (party, capacity) cell."""

    flow_raw: np.ndarray  # ch - dis, kW
    flow_res: np.ndarray
    lower_objective: float


def _party_dispatch(instance, party, cap, grad_flows) -> _Dispatch:
    t = instance.grid.slot_count
    if party < instance.customer_count:
        lp = build_llm_c(instance, party, cap)
    else:
        lp = build_llm_d(instance, cap)
    sol = solve_lp_engine(lp)
    if sol.status != "optimal":
        raise RuntimeError(f"LLM solve failed ({sol.status}) at capacity {cap}")
    grad = np.zeros(lp.n_vars)
    grad[:t] = grad_flows
    grad[t: 2 * t] = -grad_flows
    x_res = optimistic_resolve(lp, grad, sol=sol)
    return _Dispatch(
        flow_raw=sol.x[:t] - sol.x[t: 2 * t],
        flow_res=x_res[:t] - x_res[t: 2 * t],
        lower_objective=sol.objective,
    )


def grid_oracle(instance: Instance, step: float, guard: int = GRID_GUARD) -> OracleReport:
    """Exhaustive division search on the grid {0, step, 2 step, ...}.

    Each party's dispatch depends only on its own share, so LLMs are solved
    once per distinct capacity value and reused across grid points. Ties on
    the upper objective resolve to the lexicographically smallest division
    (DisCo share first).
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    n = instance.customer_count
    s_total = instance.storage.total_capacity
    k_max = int(math.floor(s_total / step + 1e-9))
    n_points = math.comb(k_max + n + 1, n + 1)
    if n_points > guard:
        raise ValueError(
            f"grid of {n_points} points exceeds the {guard}-point guard"
        )
    w = instance.weights
    dt = instance.grid.slot_hours
    flow_price = (w.lambda2 * instance.prices.lmp + w.lambda3 * instance.prices.tou) * dt
    base_cost = float(flow_price @ instance.loads.system_load)
    sys_load = instance.loads.system_load

    cache = [
        [_party_dispatch(instance, p, k * step, flow_price) for k in range(k_max + 1)]
        for p in range(n + 1)
    ]  # party order: customers 0..n-1, then disco

    def upper_value(flows):
        net = sys_load + flows
        return w.lambda1 * float(net.max()) + float(flow_price @ flows) + base_cost

    records = []
    best = None  # (objective, division tuple)

    def visit(idx):
        nonlocal best
        disco_k = idx[0]
        cust_k = idx[1:]
        flows_raw = cache[n][disco_k].flow_raw.copy()
        flows_res = cache[n][disco_k].flow_res.copy()
        for p, kk in enumerate(cust_k):
            flows_raw += cache[p][kk].flow_raw
            flows_res += cache[p][kk].flow_res
        val = min(upper_value(flows_raw), upper_value(flows_res))
        lower = tuple(
            [cache[p][kk].lower_objective for p, kk in enumerate(cust_k)]
            + [cache[n][disco_k].lower_objective]
        )
        division = (disco_k * step,) + tuple(kk * step for kk in cust_k)
        records.append((division, lower, val))
        if best is None or val < best[0] - 1e-12:
            best = (val, division)

    def walk(prefix, remaining):
        if len(prefix) == n + 1:
            visit(prefix)
            return
        for kk in range(remaining + 1):
            walk(prefix + (kk,), remaining - kk)

    walk((), k_max)
    best_obj, best_div = best
    ties = sum(1 for r in records if abs(r[2] - best_obj) <= 1e-9) - 1
    notes = []
    if ties > 0:
        notes.append(f"{ties} grid points within 1e-9 of the best objective")
    return OracleReport(
        best_division=Division(
            s_disco=best_div[0], s_customer=np.array(best_div[1:])
        ),
        best_objective=best_obj,
        records=tuple(records),
        notes=tuple(notes),
        grid_step=step,
    )
