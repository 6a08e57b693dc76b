"""Convex quadratic programs by a primal active-set method.

    min  1/2 v'Hv + q'v
    s.t. A_eq v  = b_eq
         A_ge v >= b_ge

``H`` is positive semidefinite.  The method needs the Hessian restricted to
the null space of the working set to be positive definite whenever a full
step is taken; along zero-curvature descent directions it steps to the
nearest blocking constraint.  For the bundle master (strictly convex in the
point, linear in the epigraph variable) any working set containing one cut
row meets this, and that row keeps a unit multiplier so it is never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, SolverError, solve_lp

ACTIVE_TOL = 1e-9
CURV_TOL = 1e-12


@dataclass
class QuadraticProgram:
    H: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ge: np.ndarray | None = None
    b_ge: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.size
        self.H = np.asarray(self.H, dtype=float).reshape(n, n)
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.asarray(self.A_eq, float).reshape(-1, n)
        self.b_eq = np.zeros(self.A_eq.shape[0]) if self.b_eq is None else np.asarray(self.b_eq, float).reshape(-1)
        self.A_ge = np.zeros((0, n)) if self.A_ge is None else np.asarray(self.A_ge, float).reshape(-1, n)
        self.b_ge = np.zeros(self.A_ge.shape[0]) if self.b_ge is None else np.asarray(self.b_ge, float).reshape(-1)

    @property
    def n(self):
        return self.q.size

    def objective(self, v):
        return 0.5 * v @ self.H @ v + self.q @ v


@dataclass
class QpSolution:
    status: str
    x: np.ndarray | None = None
    fun: float = np.nan
    dual_eq: np.ndarray | None = None
    dual_ge: np.ndarray | None = None
    active: list = field(default_factory=list)
    iterations: int = 0


def _null_space(A, n):
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    return Vt[rank:].T


def _independent(rows, a):
    if not rows:
        return np.linalg.norm(a) > 1e-12
    M = np.vstack(rows + [a])
    return np.linalg.matrix_rank(M, tol=1e-10) == len(rows) + 1


def solve_qp(qp, x0=None, max_iter=5000):
    """Minimise ``qp`` from the feasible start ``x0`` (found by an LP if omitted)."""
    n = qp.n
    if x0 is None or not is_feasible(qp, x0, 1e-9):
        feas = solve_lp(LinearProgram(c=np.zeros(n), A_eq=qp.A_eq, b_eq=qp.b_eq,
                                      A_ge=qp.A_ge, b_ge=qp.b_ge,
                                      lo=np.full(n, -np.inf), hi=np.full(n, np.inf)))
        if feas.status != "optimal":
            return QpSolution("infeasible")
        x0 = feas.x
    v = np.asarray(x0, dtype=float).copy()

    eq_rows = [qp.A_eq[i] for i in range(qp.A_eq.shape[0])]
    work = []  # indices of A_ge rows in the working set
    rows = []
    for i in range(qp.A_eq.shape[0]):
        if _independent(rows, qp.A_eq[i]):
            rows.append(qp.A_eq[i])
    slack = qp.A_ge @ v - qp.b_ge
    for i in np.nonzero(np.abs(slack) <= 1e-9 * (1 + np.abs(qp.b_ge)))[0]:
        if _independent(rows, qp.A_ge[i]):
            rows.append(qp.A_ge[i])
            work.append(int(i))

    for it in range(1, max_iter + 1):
        AW = np.vstack(eq_rows + [qp.A_ge[i] for i in work]) if (eq_rows or work) else np.zeros((0, n))
        grad = qp.H @ v + qp.q
        Z = _null_space(AW, n)
        p = np.zeros(n)
        unbounded_dir = False
        if Z.shape[1]:
            Hz = Z.T @ qp.H @ Z
            gz = Z.T @ grad
            lam, V = np.linalg.eigh(Hz)
            scale = max(1.0, np.abs(lam).max(initial=0.0))
            flat = lam <= CURV_TOL * scale
            gv = V.T @ gz
            if np.any(flat & (np.abs(gv) > 1e-12 * max(1.0, np.abs(grad).max()))):
                d = -(V[:, flat] @ gv[flat])
                p = Z @ d
                unbounded_dir = True
            else:
                curved = ~flat
                p = -Z @ (V[:, curved] @ (gv[curved] / lam[curved]))

        if not unbounded_dir and np.linalg.norm(p) <= 1e-12 * max(1.0, np.linalg.norm(v)):
            # stationary on the working set: check multiplier signs
            mult = np.linalg.lstsq(AW.T, grad, rcond=None)[0] if AW.shape[0] else np.zeros(0)
            m_ge = mult[len(eq_rows):]
            if m_ge.size == 0 or m_ge.min() >= -1e-10:
                dual_ge = np.zeros(qp.A_ge.shape[0])
                dual_ge[work] = np.maximum(m_ge, 0.0)
                dual_eq = mult[:len(eq_rows)] if eq_rows else np.zeros(0)
                return QpSolution("optimal", x=v, fun=float(qp.objective(v)),
                                  dual_eq=dual_eq, dual_ge=dual_ge, active=list(work),
                                  iterations=it)
            drop = int(np.argmin(m_ge))
            work.pop(drop)
            continue

        # ratio test against inactive inequality rows
        Ap = qp.A_ge @ p
        slack = qp.A_ge @ v - qp.b_ge
        step, block = (np.inf if unbounded_dir else 1.0), None
        for i in range(qp.A_ge.shape[0]):
            if i in work or Ap[i] >= -1e-14:
                continue
            s = max(slack[i], 0.0) / -Ap[i]
            if s < step - 1e-15:
                step, block = s, i
        if not np.isfinite(step):
            raise SolverError("QP unbounded below along a zero-curvature direction")
        v = v + step * p
        if block is not None:
            work.append(block)
    raise SolverError("QP active-set iteration cap reached")


def is_feasible(qp, v, tol=1e-7):
    v = np.asarray(v, dtype=float)
    if v.shape != (qp.n,):
        return False
    ok_eq = np.all(np.abs(qp.A_eq @ v - qp.b_eq) <= tol * (1 + np.abs(qp.b_eq)))
    ok_ge = np.all(qp.A_ge @ v - qp.b_ge >= -tol * (1 + np.abs(qp.b_ge)))
    return bool(ok_eq and ok_ge)


def qp_kkt_residuals(qp, sol):
    v = sol.x
    grad = qp.H @ v + qp.q
    stat = grad - qp.A_eq.T @ sol.dual_eq - qp.A_ge.T @ sol.dual_ge
    slack = qp.A_ge @ v - qp.b_ge
    return {
        "primal": max(np.abs(qp.A_eq @ v - qp.b_eq).max(initial=0.0),
                      max(0.0, -slack.min(initial=0.0))),
        "dual_sign": max(0.0, -sol.dual_ge.min(initial=0.0)),
        "stationarity": np.abs(stat).max(initial=0.0),
        "complementarity": np.abs(slack * sol.dual_ge).max(initial=0.0),
    }
