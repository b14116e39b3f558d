"""Bounded-variable revised primal simplex.

Rows are turned into equalities with one slack per row (``L`` rows get a
slack in ``[0, inf)``, ``G`` rows ``(-inf, 0]``, ``E`` rows ``[0, 0]``).  The
starting basis uses, per row, the slack if it is feasible, otherwise a
feasible column singleton of that row (cheapest first), otherwise an
artificial; a phase 1 on the artificials precedes phase 2.

The basis is factorised with a sparse LU and updated in product form between
periodic refactorisations.  Pricing is Dantzig's rule with a Harris ratio
test; after ``bland_after`` consecutive degenerate pivots the solver switches
to Bland's rule until a pivot makes progress again.  Pivoting is fully
deterministic.

A solve may be warm-started from the optimal basis of a problem that differs
only in column bounds (a branch-and-bound child).  Such a basis stays dual
feasible, so a bounded dual simplex restores primal feasibility, after which
the primal loop confirms optimality.  If the old basis cannot be reused the
solve silently falls back to a cold start.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .lp import LPProblem, LPSolution, LPStatus

BASIC, AT_LB, AT_UB, FREE = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class Basis:
    """Restart point: basic columns per row and a status for every column."""
    basic: np.ndarray
    status: np.ndarray
    art_row: np.ndarray
    art_sign: np.ndarray


class _Fallback(Exception):
    """Warm start unusable; solve from scratch."""


class _Factor:
    """LU of the basis matrix plus a product-form eta file."""

    def __init__(self, B: sp.csc_matrix):
        self.m = B.shape[0]
        self.lu = splu(B, permc_spec="COLAMD", diag_pivot_thresh=0.1)
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        w = self.lu.solve(v)
        for r, e in self.etas:
            wr = w[r]
            if wr != 0.0:
                w += wr * e
        return w

    def btran(self, v: np.ndarray) -> np.ndarray:
        w = np.array(v, dtype=float)
        for r, e in reversed(self.etas):
            w[r] += e @ w
        return self.lu.solve(w, trans="T")

    def update(self, alpha: np.ndarray, r: int) -> None:
        e = -alpha / alpha[r]
        e[r] = 1.0 / alpha[r] - 1.0
        self.etas.append((r, e))


class _Simplex:
    def __init__(self, lp: LPProblem, feas_tol: float, opt_tol: float, max_iter: int,
                 bland_after: int, refactor_every: int, warm: Basis | None = None):
        self.lp = lp
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.max_iter = max_iter
        self.bland_after = bland_after
        self.refactor_every = refactor_every
        self.pivot_tol = 1e-9
        self.iterations = 0

        m, n = lp.n_rows, lp.n_cols
        self.m, self.n = m, n
        self.Acsc = lp.A.tocsc()
        self.AT = lp.A.T.tocsr()
        self.b = lp.rhs.copy()

        s_lo = np.where(lp.senses == "G", -np.inf, 0.0)
        s_hi = np.where(lp.senses == "L", np.inf, 0.0)
        self.lo = np.concatenate([lp.lb, s_lo])
        self.hi = np.concatenate([lp.ub, s_hi])
        self.cost = np.concatenate([lp.c, np.zeros(m)])
        self.art_row = np.zeros(0, dtype=int)
        self.art_sign = np.zeros(0)
        self.warm = warm is not None
        if warm is None:
            self._crash()
        else:
            self._restore(warm)

    # -- column access -------------------------------------------------------

    def _column(self, j: int) -> np.ndarray:
        v = np.zeros(self.m)
        if j < self.n:
            a = self.Acsc
            lo, hi = a.indptr[j], a.indptr[j + 1]
            v[a.indices[lo:hi]] = a.data[lo:hi]
        elif j < self.n + self.m:
            v[j - self.n] = 1.0
        else:
            k = j - self.n - self.m
            v[self.art_row[k]] = self.art_sign[k]
        return v

    def _basis_matrix(self) -> sp.csc_matrix:
        n, m = self.n, self.m
        pos = np.arange(m)
        struct = self.basis < n
        sub = self.Acsc[:, self.basis[struct]].tocoo()
        slack = (self.basis >= n) & (self.basis < n + m)
        art = self.basis >= n + m
        k = self.basis[art] - n - m
        rows = np.concatenate([sub.row, self.basis[slack] - n, self.art_row[k]])
        cols = np.concatenate([pos[struct][sub.col], pos[slack], pos[art]])
        vals = np.concatenate([sub.data, np.ones(int(slack.sum())), self.art_sign[k]])
        return sp.csc_matrix((vals, (rows, cols)), shape=(m, m))

    def _activity(self, xs: np.ndarray) -> np.ndarray:
        """[A I S] @ x for a full-length x vector."""
        n, m = self.n, self.m
        act = self.lp.A @ xs[:n] + xs[n:n + m]
        if len(self.art_row):
            np.add.at(act, self.art_row, self.art_sign * xs[n + m:])
        return act

    # -- starting basis -------------------------------------------------------

    def _crash(self) -> None:
        n, m = self.n, self.m
        lo, hi = self.lo, self.hi
        x = np.zeros(n + m)
        status = np.empty(n + m, dtype=np.int8)
        for j in range(n):
            if lo[j] <= 0.0 <= hi[j]:
                x[j] = 0.0
                status[j] = AT_LB if lo[j] == 0.0 else (AT_UB if hi[j] == 0.0 else FREE)
            elif np.isfinite(lo[j]):
                x[j], status[j] = lo[j], AT_LB
            else:
                x[j], status[j] = hi[j], AT_UB
        status[n:] = AT_LB
        resid = self.b - self.lp.A @ x[:n]

        # column singletons: structural columns with exactly one nonzero
        counts = np.diff(self.Acsc.indptr)
        singles: dict[int, list[int]] = {}
        for j in np.flatnonzero(counts == 1):
            if lo[j] == hi[j]:
                continue
            singles.setdefault(int(self.Acsc.indices[self.Acsc.indptr[j]]), []).append(int(j))

        basis = np.empty(m, dtype=int)
        art_rows, art_signs, art_vals = [], [], []
        tol = self.feas_tol
        for i in range(m):
            r = resid[i]
            s = n + i
            if lo[s] - tol <= r <= hi[s] + tol:
                basis[i] = s
                x[s] = r
                status[s] = BASIC
                continue
            pick = None
            for j in singles.get(i, ()):
                aij = self.Acsc.data[self.Acsc.indptr[j]]
                v = x[j] + r / aij
                if lo[j] - tol <= v <= hi[j] + tol:
                    key = (self.cost[j], j)
                    if pick is None or key < pick[0]:
                        pick = (key, j, v)
            if pick is not None:
                _, j, v = pick
                basis[i] = j
                x[j] = v
                status[j] = BASIC
                x[s] = 0.0
                status[s] = AT_LB if lo[s] == 0.0 else AT_UB
                continue
            # slack sits at its bound nearest to the residual, artificial takes the rest
            x[s] = min(max(r, lo[s]), hi[s])
            status[s] = AT_LB if x[s] == lo[s] else AT_UB
            gap = r - x[s]
            art_rows.append(i)
            art_signs.append(1.0 if gap >= 0 else -1.0)
            art_vals.append(abs(gap))
            basis[i] = n + m + len(art_rows) - 1

        k = len(art_rows)
        self.art_row = np.asarray(art_rows, dtype=int)
        self.art_sign = np.asarray(art_signs, dtype=float)
        self.x = np.concatenate([x, np.asarray(art_vals, dtype=float)])
        self.status = np.concatenate([status, np.full(k, BASIC, dtype=np.int8)])
        self.lo = np.concatenate([self.lo, np.zeros(k)])
        self.hi = np.concatenate([self.hi, np.full(k, np.inf)])
        self.cost = np.concatenate([self.cost, np.zeros(k)])
        self.basis = basis
        self._refactor()

    def _restore(self, warm: Basis) -> None:
        n, m = self.n, self.m
        k = len(warm.art_row)
        if len(warm.basic) != m or len(warm.status) != n + m + k:
            raise _Fallback
        self.art_row = warm.art_row
        self.art_sign = warm.art_sign
        # artificials from an earlier phase 1 stay fixed at zero
        self.lo = np.concatenate([self.lo, np.zeros(k)])
        self.hi = np.concatenate([self.hi, np.zeros(k)])
        self.cost = np.concatenate([self.cost, np.zeros(k)])
        self.basis = warm.basic.copy()
        status = warm.status.copy()
        lo, hi = self.lo, self.hi
        nb = status != BASIC
        # re-seat nonbasic columns on bounds that still exist
        want_lb = nb & ((status == AT_LB) | (status == FREE))
        status[want_lb & np.isfinite(lo)] = AT_LB
        status[want_lb & ~np.isfinite(lo) & np.isfinite(hi)] = AT_UB
        at_ub = nb & (status == AT_UB) & ~np.isfinite(hi)
        status[at_ub & np.isfinite(lo)] = AT_LB
        status[nb & ~np.isfinite(lo) & ~np.isfinite(hi)] = FREE
        x = np.zeros(n + m + k)
        x[status == AT_LB] = lo[status == AT_LB]
        x[status == AT_UB] = hi[status == AT_UB]
        self.x = x
        self.status = status
        try:
            self._refactor()
        except RuntimeError:  # singular basis
            raise _Fallback from None

    def _dual_feasible(self) -> bool:
        """Flip boxed nonbasic columns to the bound their reduced cost prefers."""
        y = self.factor.btran(self.cost[self.basis])
        d = self._reduced_costs(self.cost, y)
        st, tol = self.status, self.opt_tol
        movable = self.hi > self.lo
        to_ub = movable & (st == AT_LB) & (d < -tol)
        to_lb = movable & (st == AT_UB) & (d > tol)
        bad = movable & (st == FREE) & (np.abs(d) > tol)
        if np.any(bad) or np.any(~np.isfinite(self.hi[to_ub])) or np.any(
                ~np.isfinite(self.lo[to_lb])):
            return False
        if to_ub.any() or to_lb.any():
            st[to_ub] = AT_UB
            self.x[to_ub] = self.hi[to_ub]
            st[to_lb] = AT_LB
            self.x[to_lb] = self.lo[to_lb]
            self._refactor()
        return True

    def _row_alpha(self, rho: np.ndarray) -> np.ndarray:
        """``rho @ [A I S]`` over every column."""
        n, m = self.n, self.m
        out = np.empty(len(self.x))
        out[:n] = self.AT @ rho
        out[n:n + m] = rho
        if len(self.art_row):
            out[n + m:] = self.art_sign * rho[self.art_row]
        return out

    def _dual_run(self, max_pivots: int) -> LPStatus:
        """Bounded dual simplex from a dual feasible basis."""
        since_refactor = len(self.factor.etas)
        pt, ftol, otol = self.pivot_tol, self.feas_tol, self.opt_tol
        unit = np.zeros(self.m)
        pivots = 0
        while True:
            if self.iterations >= self.max_iter:
                return LPStatus.ITERATION_LIMIT
            if pivots >= max_pivots:
                raise _Fallback
            xb = self.x[self.basis]
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            infeas = np.maximum(lo_b - xb, xb - hi_b)
            r = int(np.argmax(infeas))
            if infeas[r] <= ftol:
                return LPStatus.OPTIMAL
            below = xb[r] < lo_b[r]
            unit[r] = 1.0
            rho = self.factor.btran(unit)
            unit[r] = 0.0
            abar = self._row_alpha(rho)
            if below:
                abar = -abar
            y = self.factor.btran(self.cost[self.basis])
            d = self._reduced_costs(self.cost, y)
            st = self.status
            movable = self.hi > self.lo
            lb_c = movable & (st == AT_LB) & (abar > pt)
            ub_c = movable & (st == AT_UB) & (abar < -pt)
            fr_c = movable & (st == FREE) & (np.abs(abar) > pt)
            cand = np.flatnonzero(lb_c | ub_c | fr_c)
            if cand.size == 0:
                if since_refactor == 0:
                    return LPStatus.INFEASIBLE
                self._refactor()
                since_refactor = 0
                continue
            a_c, d_c = abar[cand], d[cand]
            exact = np.where(st[cand] == FREE, np.abs(d_c) / np.abs(a_c),
                             np.maximum(d_c / a_c, 0.0))
            relax = np.where(st[cand] == FREE, (np.abs(d_c) + otol) / np.abs(a_c),
                             np.where(a_c > 0, (d_c + otol) / a_c, (d_c - otol) / a_c))
            ok = np.flatnonzero(exact <= relax.min())
            q = int(cand[ok[np.argmax(np.abs(a_c[ok]))]])

            alpha = self.factor.ftran(self._column(q))
            if abs(alpha[r]) < pt:
                self._refactor()
                since_refactor = 0
                pivots += 1
                continue
            target = lo_b[r] if below else hi_b[r]
            dq = (xb[r] - target) / alpha[r]
            p = int(self.basis[r])
            self.x[q] += dq
            self.x[self.basis] -= dq * alpha
            self.x[p] = target
            self.status[p] = AT_LB if below else AT_UB
            self.basis[r] = q
            self.status[q] = BASIC
            self.iterations += 1
            pivots += 1
            since_refactor += 1
            if since_refactor >= self.refactor_every or abs(alpha[r]) < 1e-7:
                self._refactor()
                since_refactor = 0
            else:
                self.factor.update(alpha, r)

    # -- linear algebra -------------------------------------------------------

    def _refactor(self) -> None:
        self.factor = _Factor(self._basis_matrix())
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.factor.ftran(self.b - self._activity(xn))

    def _reduced_costs(self, cost: np.ndarray, y: np.ndarray) -> np.ndarray:
        n, m = self.n, self.m
        d = np.empty_like(cost)
        d[:n] = cost[:n] - self.AT @ y
        d[n:n + m] = cost[n:n + m] - y
        if len(self.art_row):
            d[n + m:] = cost[n + m:] - self.art_sign * y[self.art_row]
        return d

    # -- main loop ------------------------------------------------------------

    def _run(self, cost: np.ndarray) -> LPStatus:
        """Primal simplex for ``cost`` from the current basic feasible solution."""
        streak = 0
        since_refactor = len(self.factor.etas)
        rechecked = False
        while True:
            if self.iterations >= self.max_iter:
                return LPStatus.ITERATION_LIMIT
            y = self.factor.btran(cost[self.basis])
            d = self._reduced_costs(cost, y)
            movable = self.hi > self.lo
            tol = self.opt_tol
            st = self.status
            elig = movable & (((st == AT_LB) & (d < -tol)) | ((st == AT_UB) & (d > tol))
                              | ((st == FREE) & (np.abs(d) > tol)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                if rechecked or since_refactor == 0:
                    return LPStatus.OPTIMAL
                # confirm optimality on a fresh factorisation
                self._refactor()
                since_refactor = 0
                rechecked = True
                continue
            rechecked = False
            bland = streak >= self.bland_after
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0

            alpha = self.factor.ftran(self._column(q))
            rate = -direction * alpha
            theta, r = self._ratio_test(q, direction, rate, bland)
            if theta is None:
                return LPStatus.UNBOUNDED

            self.iterations += 1
            streak = streak + 1 if theta <= 1e-12 else 0
            self.x[q] += direction * theta
            xb = self.x[self.basis] + rate * theta
            self.x[self.basis] = xb
            if r < 0:
                # bound flip of the entering column
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                self.status[q] = AT_UB if direction > 0 else AT_LB
                continue
            leave = int(self.basis[r])
            if rate[r] < 0:
                self.x[leave], self.status[leave] = self.lo[leave], AT_LB
            else:
                self.x[leave], self.status[leave] = self.hi[leave], AT_UB
            if leave >= self.n + self.m:
                # artificial that left the basis never comes back
                self.hi[leave] = 0.0
                self.x[leave] = 0.0
            self.basis[r] = q
            self.status[q] = BASIC
            since_refactor += 1
            if since_refactor >= self.refactor_every or abs(alpha[r]) < 1e-7:
                self._refactor()
                since_refactor = 0
            else:
                self.factor.update(alpha, r)

    def _ratio_test(self, q: int, direction: float, rate: np.ndarray, bland: bool):
        """Step length and leaving position (``-1`` for a bound flip, ``None`` if unbounded)."""
        xb = self.x[self.basis]
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]
        pt = self.pivot_tol
        dec = (rate < -pt) & np.isfinite(lo_b)
        inc = (rate > pt) & np.isfinite(hi_b)

        if direction > 0:
            own = self.hi[q] - self.x[q]
        else:
            own = self.x[q] - self.lo[q]

        exact = np.full(len(xb), np.inf)
        exact[dec] = np.maximum(xb[dec] - lo_b[dec], 0.0) / -rate[dec]
        exact[inc] = np.maximum(hi_b[inc] - xb[inc], 0.0) / rate[inc]

        if bland:
            theta = exact.min(initial=np.inf)
            if own <= theta:
                return (None, -1) if not np.isfinite(own) else (own, -1)
            ties = np.flatnonzero(exact <= theta)
            r = int(ties[np.argmin(self.basis[ties])])
            return theta, r

        delta = self.feas_tol
        relaxed = np.full(len(xb), np.inf)
        relaxed[dec] = (xb[dec] - lo_b[dec] + delta) / -rate[dec]
        relaxed[inc] = (hi_b[inc] - xb[inc] + delta) / rate[inc]
        theta_max = relaxed.min(initial=np.inf)
        if own <= theta_max:
            return (None, -1) if not np.isfinite(own) else (own, -1)
        ties = np.flatnonzero(exact <= theta_max)
        mag = np.abs(rate[ties])
        r = int(ties[np.argmax(mag)])
        return float(exact[r]), r

    # -- driver ---------------------------------------------------------------

    def solve(self) -> LPSolution:
        n, m = self.n, self.m
        if self.warm:
            if not self._dual_feasible():
                raise _Fallback
            status = self._dual_run(max_pivots=max(1000, 2 * m))
            if status is not LPStatus.OPTIMAL:
                return LPSolution(status, iterations=self.iterations)
        elif len(self.art_row):
            phase1 = np.zeros_like(self.cost)
            phase1[n + m:] = 1.0
            status = self._run(phase1)
            if status is LPStatus.ITERATION_LIMIT:
                return LPSolution(LPStatus.ITERATION_LIMIT, iterations=self.iterations)
            infeas = float(self.x[n + m:].sum())
            if infeas > self.feas_tol * max(1.0, np.abs(self.b).max(initial=0.0)):
                return LPSolution(LPStatus.INFEASIBLE, iterations=self.iterations)
            self.hi[n + m:] = 0.0
            nb = self.status[n + m:] != BASIC
            self.x[n + m:][nb] = 0.0

        status = self._run(self.cost)
        if status is not LPStatus.OPTIMAL:
            return LPSolution(status, iterations=self.iterations)
        y = self.factor.btran(self.cost[self.basis])
        x = self.x[:n].copy()
        # snap nonbasic columns exactly onto their bounds
        nb = self.status[:n]
        x[nb == AT_LB] = self.lo[:n][nb == AT_LB]
        x[nb == AT_UB] = self.hi[:n][nb == AT_UB]
        basis = Basis(self.basis.copy(), self.status.copy(), self.art_row.copy(),
                      self.art_sign.copy())
        return LPSolution(LPStatus.OPTIMAL, x=x, objective=float(self.lp.c @ x), duals=y,
                          reduced_costs=self.lp.c - self.AT @ y, iterations=self.iterations,
                          basis=basis)


def solve_lp(lp: LPProblem, feas_tol: float = 1e-7, opt_tol: float = 1e-7,
             max_iter: int = 1_000_000, bland_after: int = 50,
             refactor_every: int = 64, warm_start: Basis | None = None) -> LPSolution:
    """Solve ``lp`` to optimality (or report infeasible/unbounded/iteration limit).

    ``warm_start`` is the ``basis`` of an earlier optimal solution of a problem
    with the same rows and columns (bounds may differ).
    """
    if np.any(lp.lb > lp.ub):
        return LPSolution(LPStatus.INFEASIBLE)
    if lp.n_rows == 0:
        return _solve_unconstrained(lp)
    args = (lp, feas_tol, opt_tol, max_iter, bland_after, refactor_every)
    spent = 0
    if warm_start is not None:
        sim = None
        try:
            sim = _Simplex(*args, warm=warm_start)
            return sim.solve()
        except _Fallback:
            spent = sim.iterations if sim is not None else 0
    sol = _Simplex(*args).solve()
    sol.iterations += spent
    return sol


def _solve_unconstrained(lp: LPProblem) -> LPSolution:
    c = lp.c
    x = np.where(c > 0, lp.lb, np.where(c < 0, lp.ub, np.clip(0.0, lp.lb, lp.ub)))
    if not np.all(np.isfinite(x)):
        return LPSolution(LPStatus.UNBOUNDED)
    return LPSolution(LPStatus.OPTIMAL, x=x, objective=float(c @ x), duals=np.zeros(0),
                      reduced_costs=c.copy())
