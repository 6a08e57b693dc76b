"""Linear programs: data type, HiGHS backend and a dense revised simplex.

Convention (minimisation)::

    min  c'x
    s.t. A_eq x  = b_eq      duals phi (free)
         A_ge x >= b_ge      duals pi >= 0
         lo <= x <= hi

At an optimum ``c = A_eq'phi + A_ge'pi + r`` where ``r`` are the reduced
costs of the bounds, and ``c'x = b_eq'phi + b_ge'pi + (bound terms)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9


class SolverError(RuntimeError):
    """A kernel failed to reach a certified status."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ge: np.ndarray | None = None
    b_ge: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size

        def mat(A):
            return np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)

        def vec(b, m):
            return np.zeros(m) if b is None else np.asarray(b, dtype=float).reshape(-1)

        self.A_eq = mat(self.A_eq)
        self.b_eq = vec(self.b_eq, self.A_eq.shape[0])
        A_ge, b_ge = mat(self.A_ge), vec(self.b_ge, mat(self.A_ge).shape[0])
        if self.A_ub is not None:
            A_ub = mat(self.A_ub)
            A_ge = np.vstack([A_ge, -A_ub])
            b_ge = np.concatenate([b_ge, -vec(self.b_ub, A_ub.shape[0])])
            self.A_ub = self.b_ub = None
        self.A_ge, self.b_ge = A_ge, b_ge
        self.lo = np.zeros(n) if self.lo is None else np.broadcast_to(
            np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.full(n, np.inf) if self.hi is None else np.broadcast_to(
            np.asarray(self.hi, dtype=float), (n,)).copy()
        if self.b_eq.size != self.A_eq.shape[0] or self.b_ge.size != self.A_ge.shape[0]:
            raise ValueError("row counts and rhs lengths differ")
        if np.any(self.lo > self.hi):
            raise ValueError("variable bounds with lo > hi")

    @property
    def n(self):
        return self.c.size


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    fun: float = np.nan
    dual_eq: np.ndarray | None = None
    dual_ge: np.ndarray | None = None
    reduced: np.ndarray | None = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == "optimal"


def solve_lp(lp, backend="highs"):
    """Solve ``lp``; ``backend`` is ``"highs"`` or ``"simplex"``."""
    if backend == "highs":
        return _solve_highs(lp)
    if backend == "simplex":
        return RevisedSimplex(lp).solve()
    raise ValueError(f"unknown LP backend {backend!r}")


def _solve_highs(lp):
    bounds = np.column_stack([lp.lo, lp.hi])
    bounds = [(None if np.isinf(a) else a, None if np.isinf(b) else b) for a, b in bounds]
    res = linprog(
        lp.c,
        A_ub=-lp.A_ge if lp.A_ge.shape[0] else None,
        b_ub=-lp.b_ge if lp.A_ge.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    if res.status == 2:
        return LpSolution("infeasible", iterations=res.nit)
    if res.status == 3:
        return LpSolution("unbounded", iterations=res.nit)
    if res.status != 0:
        raise SolverError(f"HiGHS LP failed: {res.message}")
    dual_eq = np.asarray(res.eqlin.marginals) if lp.A_eq.shape[0] else np.zeros(0)
    dual_ge = -np.asarray(res.ineqlin.marginals) if lp.A_ge.shape[0] else np.zeros(0)
    reduced = np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals)
    return LpSolution("optimal", x=np.asarray(res.x), fun=float(res.fun), dual_eq=dual_eq,
                      dual_ge=dual_ge, reduced=reduced, iterations=res.nit)


# ----------------------------------------------------------------------------
# native revised simplex
# ----------------------------------------------------------------------------


class RevisedSimplex:
    """Two-phase revised simplex on the standard form of a :class:`LinearProgram`.

    Pricing is Dantzig's rule until ``degenerate_limit`` consecutive
    degenerate pivots, then Bland's rule for the rest of the phase.
    """

    def __init__(self, lp, max_iter=20000, degenerate_limit=50):
        self.lp = lp
        self.max_iter = max_iter
        self.degenerate_limit = degenerate_limit
        self._to_standard_form()

    def _to_standard_form(self):
        lp = self.lp
        n = lp.n
        # each original variable becomes x_j = off_j + sum_k coef_k z_k
        cols = []  # (orig index, coefficient)
        self.offset = np.zeros(n)
        ub_rows = []
        for j in range(n):
            lo, hi = lp.lo[j], lp.hi[j]
            if np.isfinite(lo):
                self.offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    ub_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                self.offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nz = len(cols)
        Tmap = np.zeros((n, nz))
        for k, (j, s) in enumerate(cols):
            Tmap[j, k] = s
        self.Tmap = Tmap

        m_eq, m_ge, m_ub = lp.A_eq.shape[0], lp.A_ge.shape[0], len(ub_rows)
        n_slack = m_ge + m_ub
        m = m_eq + m_ge + m_ub
        A = np.zeros((m, nz + n_slack))
        b = np.zeros(m)
        A[:m_eq, :nz] = lp.A_eq @ Tmap
        b[:m_eq] = lp.b_eq - lp.A_eq @ self.offset
        A[m_eq:m_eq + m_ge, :nz] = lp.A_ge @ Tmap
        A[m_eq:m_eq + m_ge, nz:nz + m_ge] = -np.eye(m_ge)
        b[m_eq:m_eq + m_ge] = lp.b_ge - lp.A_ge @ self.offset
        for r, (k, cap) in enumerate(ub_rows):
            A[m_eq + m_ge + r, k] = 1.0
            A[m_eq + m_ge + r, nz + m_ge + r] = 1.0
            b[m_eq + m_ge + r] = cap
        self.sign = np.where(b < 0, -1.0, 1.0)
        self.A = A * self.sign[:, None]
        self.b = b * self.sign
        self.cost = np.concatenate([Tmap.T @ lp.c, np.zeros(n_slack)])
        self.m_eq, self.m_ge, self.m_ub = m_eq, m_ge, m_ub
        self.nz = nz

    def _iterate(self, A, b, cost, basis, phase):
        m, ncol = A.shape
        degenerate = 0
        bland = False
        it = 0
        while True:
            it += 1
            if it > self.max_iter:
                raise SolverError(f"simplex iteration cap reached in phase {phase}")
            B = A[:, basis]
            xB = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, cost[basis])
            red = cost - A.T @ y
            red[basis] = 0.0
            cand = np.nonzero(red < -PIVOT_TOL)[0]
            if cand.size == 0:
                return basis, xB, y, it
            enter = cand[0] if bland else cand[np.argmin(red[cand])]
            d = np.linalg.solve(B, A[:, enter])
            pos = d > PIVOT_TOL
            if not np.any(pos):
                ray = np.zeros(ncol)
                ray[enter] = 1.0
                ray[basis] = -d
                return None, ray, None, it
            ratios = np.full(m, np.inf)
            ratios[pos] = np.maximum(xB[pos], 0.0) / d[pos]
            rmin = ratios.min()
            ties = np.nonzero(ratios <= rmin + 1e-12)[0]
            leave = ties[np.argmin(np.asarray(basis)[ties])] if bland or ties.size > 1 else ties[0]
            if rmin <= 1e-12:
                degenerate += 1
                if degenerate >= self.degenerate_limit:
                    bland = True
            else:
                degenerate = 0
            basis[leave] = enter

    def solve(self):
        A, b = self.A, self.b
        m, ncol = A.shape
        if m == 0:
            if np.any(self.cost < -PIVOT_TOL):
                return LpSolution("unbounded")
            return self._finish(np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), 0)

        # phase 1 with one artificial per row
        A1 = np.hstack([A, np.eye(m)])
        c1 = np.concatenate([np.zeros(ncol), np.ones(m)])
        basis = list(range(ncol, ncol + m))
        basis, xB, _, it1 = self._iterate(A1, b, c1, basis, 1)
        if basis is None:
            raise SolverError("phase 1 reported unbounded")
        if c1[basis] @ xB > 1e-8 * (1.0 + np.abs(b).max()):
            return LpSolution("infeasible", iterations=it1)

        # drive artificials out of the basis; rows that cannot be cleared are redundant
        keep_rows = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] < ncol:
                continue
            B = A1[:, basis]
            row = np.linalg.solve(B.T, np.eye(m)[r]) @ A
            cand = [j for j in range(ncol) if abs(row[j]) > 1e-7 and j not in basis]
            if cand:
                basis[r] = cand[0]
            else:
                keep_rows[r] = False
        basis = [bi for bi, k in zip(basis, keep_rows) if k]
        A2, b2 = A[keep_rows], b[keep_rows]

        basis, xB, y, it2 = self._iterate(A2, b2, self.cost, basis, 2)
        if basis is None:
            return LpSolution("unbounded", iterations=it1 + it2, info={"ray": self.Tmap @ xB[:self.nz]})
        yfull = np.zeros(m)
        yfull[keep_rows] = y
        return self._finish(np.asarray(basis), xB, yfull, it1 + it2)

    def _finish(self, basis, xB, y, iters):
        lp = self.lp
        z = np.zeros(self.A.shape[1])
        z[basis] = xB
        x = self.offset + self.Tmap @ z[:self.nz]
        y = y * self.sign
        dual_eq = y[:self.m_eq]
        dual_ge = y[self.m_eq:self.m_eq + self.m_ge]
        reduced = lp.c - lp.A_eq.T @ dual_eq - lp.A_ge.T @ dual_ge
        return LpSolution("optimal", x=x, fun=float(lp.c @ x), dual_eq=dual_eq,
                          dual_ge=dual_ge, reduced=reduced, iterations=iters)


def lp_kkt_residuals(lp, sol):
    """Primal/dual feasibility and complementarity residuals of an optimal solution."""
    x = sol.x
    r_eq = np.abs(lp.A_eq @ x - lp.b_eq).max(initial=0.0)
    slack = lp.A_ge @ x - lp.b_ge
    r_ge = max(0.0, -slack.min(initial=0.0))
    r_bnd = max(0.0, (lp.lo - x).max(initial=0.0), (x - lp.hi).max(initial=0.0))
    red = lp.c - lp.A_eq.T @ sol.dual_eq - lp.A_ge.T @ sol.dual_ge
    # reduced costs must be >= 0 at lo, <= 0 at hi, 0 between
    at_lo = np.isfinite(lp.lo) & (x - lp.lo <= 1e-7)
    at_hi = np.isfinite(lp.hi) & (lp.hi - x <= 1e-7)
    viol = np.where(at_lo & at_hi, 0.0,
                    np.where(at_lo, np.maximum(-red, 0.0),
                             np.where(at_hi, np.maximum(red, 0.0), np.abs(red))))
    return {
        "primal": max(r_eq, r_ge, r_bnd),
        "dual_sign": max(0.0, -sol.dual_ge.min(initial=0.0)),
        "stationarity": viol.max(initial=0.0),
        "complementarity": np.abs(slack * sol.dual_ge).max(initial=0.0),
    }
