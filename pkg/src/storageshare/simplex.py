"""Self-contained primal/dual simplex over the bounded standard form.

A LinearProgram is densified into

    min c.x   s.t.   A x = b,   lo <= x <= hi

by appending one surplus column per inequality row. Cold solves run the
classic two phases with artificial columns. Re-solves after bound changes
(branch and bound lives on those) warm-start from the previous basis and
run the bounded-variable dual simplex, finishing with a primal cleanup
pass so the returned point is optimal, not merely feasible.

Pricing is Dantzig (most negative reduced cost) with lowest-index
tie-breaking; after fifty consecutive degenerate steps the engine drops to
Bland's rule, which cannot cycle. The basis inverse is kept explicitly and
rebuilt from scratch every hundred pivots to shed accumulated drift.
"""

from __future__ import annotations

import numpy as np

from .lp import LinearProgram, LpSolution

AT_LB, AT_UB, FREE, BASIC = 0, 1, 2, 3

_DUAL_TOL = 1e-9
_PRIMAL_TOL = 1e-9
_PIVOT_TOL = 1e-10
_DEGEN_TOL = 1e-10
_BLAND_AFTER = 50
_REFACTOR_EVERY = 100


class SimplexError(RuntimeError):
    """Numerical breakdown that a cold restart did not cure."""


class Simplex:
    """One LP instance plus mutable solver state, reusable across re-solves."""

    def __init__(self, lp: LinearProgram, max_iter: int | None = None,
                 bland_after: int | None = _BLAND_AFTER):
        self.lp = lp
        self.bland_after = bland_after if bland_after is not None else np.inf
        n, mg, mh = lp.n_vars, lp.n_g, lp.n_h
        self.n = n
        self.mg = mg
        self.m = mg + mh
        self.nt = n + mg  # structural + surplus columns
        a = np.zeros((self.m, self.nt))
        if mg:
            a[:mg, :n] = lp.dense_g()
            a[:mg, n:] = -np.eye(mg)
        if mh:
            a[mg:, :n] = lp.dense_h()
        self.a = a
        self.b = np.concatenate([lp.b_g(), lp.b_h()])
        self.base_lo = np.concatenate([lp.lb, np.zeros(mg)])
        self.base_hi = np.concatenate([lp.ub, np.full(mg, np.inf)])
        self.c2 = np.concatenate([lp.c, np.zeros(mg)])
        self.max_iter = max_iter if max_iter else max(2000, 50 * (self.m + self.nt))
        # mutable state, filled by solve()/resolve()
        self.lo = None
        self.hi = None
        self.status = None
        self.basis = None
        self.xb = None
        self.binv = None
        self.art_sign = np.ones(self.m)
        self.iterations = 0
        self.bland = False
        self._degen_streak = 0
        self._dirty = 0  # pivots applied since the inverse was last rebuilt
        self._light = False  # warm path: tolerate a slightly stale inverse
        self._binv_cache = None  # (basis bytes, inverse) of the last warm start

    # ------------------------------------------------------------------ state

    def _col(self, j: int) -> np.ndarray:
        if j < self.nt:
            return self.a[:, j]
        col = np.zeros(self.m)
        col[j - self.nt] = self.art_sign[j - self.nt]
        return col

    def _nonbasic_values(self) -> np.ndarray:
        """Values of the structural/surplus columns implied by status."""
        v = np.zeros(self.nt)
        st = self.status[: self.nt]
        at_lb = st == AT_LB
        at_ub = st == AT_UB
        v[at_lb] = self.lo[: self.nt][at_lb]
        v[at_ub] = self.hi[: self.nt][at_ub]
        v[st == BASIC] = 0.0
        return v

    def _refactor(self):
        bmat = np.empty((self.m, self.m))
        for i, j in enumerate(self.basis):
            bmat[:, i] = self._col(j)
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis") from exc
        rhs = self.b - self.a @ self._nonbasic_values()
        self.xb = self.binv @ rhs
        self._dirty = 0

    def _bounds_of(self, j: int):
        return self.lo[j], self.hi[j]

    # ------------------------------------------------------------- primal loop

    def _entering(self, d: np.ndarray):
        """Pick the entering column, or -1 at optimality."""
        st = self.status[: self.nt]
        fixed = self.hi[: self.nt] - self.lo[: self.nt] <= 0.0
        score = np.full(self.nt, np.inf)
        m_lb = (st == AT_LB) & ~fixed
        m_ub = (st == AT_UB) & ~fixed
        m_fr = st == FREE
        score[m_lb] = d[m_lb]
        score[m_ub] = -d[m_ub]
        score[m_fr] = -np.abs(d[m_fr])
        eligible = score < -_DUAL_TOL
        if not eligible.any():
            return -1
        if self.bland:
            return int(np.nonzero(eligible)[0][0])
        return int(np.argmin(score))

    def _ratio_test(self, j: int, dirn: float, w: np.ndarray):
        """Step length and blocking basis position (-1 for a bound flip)."""
        rho = -w * dirn  # d(xb)/d(step)
        lim = np.full(self.m, np.inf)
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]
        up = rho > _PIVOT_TOL
        dn = rho < -_PIVOT_TOL
        with np.errstate(invalid="ignore"):
            lim[up] = (hi_b[up] - self.xb[up]) / rho[up]
            lim[dn] = (lo_b[dn] - self.xb[dn]) / rho[dn]
        lim = np.maximum(lim, 0.0)
        r_best = int(np.argmin(lim)) if self.m else -1
        basic_step = lim[r_best] if self.m else np.inf
        lo_j, hi_j = self._bounds_of(j)
        flip_step = hi_j - lo_j if np.isfinite(hi_j - lo_j) else np.inf
        step = min(basic_step, flip_step)
        if not np.isfinite(step):
            return np.inf, -1
        if flip_step <= basic_step:
            return flip_step, -1
        # tie-break blocking rows: largest pivot magnitude, then lowest index
        cand = np.nonzero(lim <= basic_step + 1e-10)[0]
        if self.bland:
            r = int(cand[np.argmin(self.basis[cand])])
        else:
            r = int(cand[np.argmax(np.abs(w[cand]))])
        return step, r

    def _apply_pivot(self, j: int, dirn: float, step: float, r: int, w: np.ndarray):
        rho = -w * dirn
        if r < 0:  # bound flip
            self.xb += rho * step
            self.status[j] = AT_UB if self.status[j] == AT_LB else AT_LB
            return
        pivot = w[r]
        if abs(pivot) < _PIVOT_TOL:
            raise SimplexError("pivot element vanished")
        st = self.status[j]
        start = self.lo[j] if st == AT_LB else self.hi[j] if st == AT_UB else 0.0
        leave = self.basis[r]
        self.xb += rho * step
        self.status[leave] = AT_UB if rho[r] > 0 else AT_LB
        self.basis[r] = j
        self.status[j] = BASIC
        self.xb[r] = start + dirn * step
        # product-form update of the explicit inverse
        self.binv[r] /= pivot
        others = w.copy()
        others[r] = 0.0
        self.binv -= np.outer(others, self.binv[r])
        self._dirty += 1

    def _primal_loop(self, c_full: np.ndarray) -> str:
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            if since_refactor >= _REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
            y = c_full[self.basis] @ self.binv
            d = c_full[: self.nt] - y @ self.a
            j = self._entering(d)
            if j < 0:
                return "optimal"
            if self.status[j] == AT_LB:
                dirn = 1.0
            elif self.status[j] == AT_UB:
                dirn = -1.0
            else:
                dirn = -np.sign(d[j])
            w = self.binv @ self._col(j)
            step, r = self._ratio_test(j, dirn, w)
            if not np.isfinite(step):
                return "unbounded"
            self._apply_pivot(j, dirn, step, r, w)
            self.iterations += 1
            since_refactor += 1
            if step <= _DEGEN_TOL:
                self._degen_streak += 1
                if self._degen_streak >= self.bland_after:
                    self.bland = True
            else:
                self._degen_streak = 0
                self.bland = False

    # -------------------------------------------------------------- dual loop

    def _dual_loop(self) -> str:
        """Bounded-variable dual simplex from a dual-feasible basis."""
        c_full = np.concatenate([self.c2, np.zeros(self.m)])
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            if since_refactor >= _REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            viol_lo = lo_b - self.xb
            viol_hi = self.xb - hi_b
            viol = np.maximum(viol_lo, viol_hi)
            if self.bland:
                bad = np.nonzero(viol > _PRIMAL_TOL)[0]
                if bad.size == 0:
                    return "optimal"
                r = int(bad[np.argmin(self.basis[bad])])
            else:
                r = int(np.argmax(viol))
                if viol[r] <= _PRIMAL_TOL:
                    return "optimal"
            below = viol_lo[r] > viol_hi[r]
            delta_need = (lo_b[r] - self.xb[r]) if below else (hi_b[r] - self.xb[r])
            y = c_full[self.basis] @ self.binv
            d = c_full[: self.nt] - y @ self.a
            alpha = self.binv[r] @ self.a
            st = self.status[: self.nt]
            fixed = self.hi[: self.nt] - self.lo[: self.nt] <= 0.0
            if below:  # x_Br must increase: -alpha_j * delta_j > 0
                ok_lb = (st == AT_LB) & ~fixed & (alpha < -_PIVOT_TOL)
                ok_ub = (st == AT_UB) & ~fixed & (alpha > _PIVOT_TOL)
            else:
                ok_lb = (st == AT_LB) & ~fixed & (alpha > _PIVOT_TOL)
                ok_ub = (st == AT_UB) & ~fixed & (alpha < -_PIVOT_TOL)
            ok_fr = (st == FREE) & (np.abs(alpha) > _PIVOT_TOL)
            eligible = np.nonzero(ok_lb | ok_ub | ok_fr)[0]
            if eligible.size == 0:
                return "infeasible"
            ratios = np.abs(d[eligible] / alpha[eligible])
            if self.bland:
                near = eligible[ratios <= ratios.min() + 1e-10]
                j = int(near[0])
            else:
                near = eligible[ratios <= ratios.min() + 1e-10]
                j = int(near[np.argmax(np.abs(alpha[near]))])
            w = self.binv @ self._col(j)
            step_signed = delta_need / (-w[r])
            st_j = self.status[j]
            start = self.lo[j] if st_j == AT_LB else self.hi[j] if st_j == AT_UB else 0.0
            leave = self.basis[r]
            self.xb += (-w) * step_signed
            self.status[leave] = AT_LB if below else AT_UB
            self.basis[r] = j
            self.status[j] = BASIC
            self.xb[r] = start + step_signed
            pivot = w[r]
            if abs(pivot) < _PIVOT_TOL:
                raise SimplexError("dual pivot element vanished")
            self.binv[r] /= pivot
            others = w.copy()
            others[r] = 0.0
            self.binv -= np.outer(others, self.binv[r])
            self._dirty += 1
            self.iterations += 1
            since_refactor += 1
            if abs(step_signed) <= _DEGEN_TOL:
                self._degen_streak += 1
                if self._degen_streak >= self.bland_after:
                    self.bland = True
            else:
                self._degen_streak = 0
                self.bland = False

    # ------------------------------------------------------------- public API

    def solve(self, lo=None, hi=None) -> LpSolution:
        """Cold two-phase solve, optionally with overridden variable bounds.

        lo/hi cover the structural+surplus columns (surplus index for
        inequality row i is n_vars + i); pass None to keep the LP's own.
        """
        self.lo = np.concatenate(
            [self.base_lo if lo is None else np.asarray(lo, float), np.zeros(self.m)]
        )
        self.hi = np.concatenate(
            [self.base_hi if hi is None else np.asarray(hi, float), np.full(self.m, np.inf)]
        )
        if np.any(self.lo > self.hi + 1e-12):
            return self._failed("infeasible")
        self._light = False
        self.iterations = 0
        self.bland = False
        self._degen_streak = 0
        self.status = np.empty(self.nt + self.m, dtype=np.int8)
        for j in range(self.nt):
            lo_j, hi_j = self.lo[j], self.hi[j]
            if np.isfinite(lo_j) and np.isfinite(hi_j):
                self.status[j] = AT_LB if abs(lo_j) <= abs(hi_j) else AT_UB
            elif np.isfinite(lo_j):
                self.status[j] = AT_LB
            elif np.isfinite(hi_j):
                self.status[j] = AT_UB
            else:
                self.status[j] = FREE
        rhs = self.b - self.a @ self._nonbasic_values()
        self.art_sign = np.where(rhs >= 0, 1.0, -1.0)
        self.basis = np.arange(self.nt, self.nt + self.m)
        self.status[self.nt :] = BASIC
        self.xb = np.abs(rhs)
        self.binv = np.diag(self.art_sign.copy())
        c1 = np.zeros(self.nt + self.m)
        c1[self.nt :] = 1.0
        out = self._primal_loop(c1)
        if out == "iteration_limit":
            return self._failed(out)
        infeas = float(self.xb[self.basis >= self.nt].sum()) if self.m else 0.0
        if infeas > 1e-7 * (1.0 + float(np.abs(self.b).max(initial=0.0))):
            return self._failed("infeasible")
        self._drive_out_artificials()
        self.lo[self.nt :] = 0.0
        self.hi[self.nt :] = 0.0
        return self._phase2()

    def resolve(self, snapshot, lo, hi) -> LpSolution:
        """Warm re-solve after a bound change, via dual simplex.

        snapshot comes from .snapshot() on a previously solved state. Falls
        back to a cold solve on any numerical trouble.
        """
        basis, status = snapshot
        self.basis = basis.copy()
        self.status = status.copy()
        self.lo = np.concatenate([np.asarray(lo, float), np.zeros(self.m)])
        self.hi = np.concatenate([np.asarray(hi, float), np.zeros(self.m)])
        if np.any(self.lo > self.hi + 1e-12):
            return self._failed("infeasible")
        self._light = True
        self.iterations = 0
        self.bland = False
        self._degen_streak = 0
        in_basis = np.zeros(self.nt + self.m, dtype=bool)
        in_basis[self.basis] = True
        for j in range(self.nt):  # re-anchor nonbasics onto current bounds
            if in_basis[j]:
                continue
            lo_j, hi_j = self.lo[j], self.hi[j]
            st = self.status[j]
            if st == AT_LB and not np.isfinite(lo_j):
                st = AT_UB if np.isfinite(hi_j) else FREE
            elif st == AT_UB and not np.isfinite(hi_j):
                st = AT_LB if np.isfinite(lo_j) else FREE
            elif st == FREE and np.isfinite(lo_j):
                st = AT_LB
            elif st == FREE and np.isfinite(hi_j):
                st = AT_UB
            self.status[j] = st
        try:
            # Sibling nodes restart from the same snapshot; reuse the basis
            # inverse instead of rebuilding it when only bounds changed.
            key = self.basis.tobytes()
            if self._binv_cache is not None and self._binv_cache[0] == key:
                self.binv = self._binv_cache[1].copy()
                self.xb = self.binv @ (self.b - self.a @ self._nonbasic_values())
                self._dirty = 0
            else:
                self._refactor()
                self._binv_cache = (key, self.binv.copy())
            out = self._dual_loop()
            if out == "optimal":
                return self._phase2()
            if out == "infeasible":
                return self._failed("infeasible")
        except SimplexError:
            pass
        return self.solve(lo, hi)

    def snapshot(self):
        return self.basis.copy(), self.status.copy()

    # ---------------------------------------------------------------- helpers

    def _drive_out_artificials(self):
        for r in range(self.m):
            if self.basis[r] < self.nt:
                continue
            row = self.binv[r] @ self.a
            st = self.status[: self.nt]
            fixed = self.hi[: self.nt] - self.lo[: self.nt] <= 0.0
            cand = np.nonzero((np.abs(row) > 1e-7) & (st != BASIC) & ~fixed)[0]
            if cand.size == 0:
                continue  # dependent row; artificial stays basic, pinned at 0
            j = int(cand[np.argmax(np.abs(row[cand]))])
            w = self.binv @ self._col(j)
            st_j = self.status[j]
            start = self.lo[j] if st_j == AT_LB else self.hi[j] if st_j == AT_UB else 0.0
            self.status[self.basis[r]] = AT_LB
            self.basis[r] = j
            self.status[j] = BASIC
            self.xb[r] = start
            pivot = w[r]
            self.binv[r] /= pivot
            others = w.copy()
            others[r] = 0.0
            self.binv -= np.outer(others, self.binv[r])

    def _phase2(self) -> LpSolution:
        c_full = np.concatenate([self.c2, np.zeros(self.m)])
        out = self._primal_loop(c_full)
        if out != "optimal":
            return self._failed(out)
        # shed drift before reading the answer off; warm tree solves accept
        # a near-fresh inverse to avoid one O(m^3) rebuild per node
        if self._dirty and not (self._light and self._dirty <= 40):
            self._refactor()
        return self._extract(c_full)

    def _extract(self, c_full: np.ndarray) -> LpSolution:
        xall = self._nonbasic_values()
        pos = {int(j): i for i, j in enumerate(self.basis)}
        for j, i in pos.items():
            if j < self.nt:
                xall[j] = self.xb[i]
        x = xall[: self.n]
        obj = float(self.lp.c @ x) + self.lp.objective_constant
        y = c_full[self.basis] @ self.binv
        dual_g = y[: self.mg].copy()
        dual_g[(dual_g < 0) & (dual_g > -1e-9)] = 0.0
        dual_h = y[self.mg :].copy()
        reduced = self.lp.c - (y[: self.mg] @ self.a[: self.mg, : self.n]
                               + y[self.mg :] @ self.a[self.mg :, : self.n])
        return LpSolution(
            status="optimal",
            x=x,
            objective=obj,
            dual_g=dual_g,
            dual_h=dual_h,
            reduced_costs=reduced,
            iterations=self.iterations,
        )

    def _failed(self, status: str) -> LpSolution:
        nan = np.full(self.n, np.nan)
        return LpSolution(
            status=status,
            x=nan,
            objective=np.nan,
            dual_g=np.full(self.mg, np.nan),
            dual_h=np.full(self.m - self.mg, np.nan),
            reduced_costs=np.full(self.n, np.nan),
            iterations=self.iterations,
        )


def solve_lp_engine(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """One-shot cold solve of a LinearProgram."""
    return Simplex(lp, max_iter=max_iter).solve()
