"""Two-stage reformulation under affine state rules, and the fully affine baseline.

State decisions follow causal rules ``s_t(u) = P_t u^t + q_t`` while control
decisions stay fully adaptive.  The coefficients join the here-and-now
vector ``xhat = (x, P_1..P_T, q_1..q_T)``; the recourse problem left for a
fixed ``(xhat, u)`` separates by stage:

    min f_t'y_t  s.t.  W_t y_t = r_t(xhat, u),  G_t y_t >= rho_t(xhat, u)

with ``r_t`` and ``rho_t`` affine in ``xhat`` for fixed ``u`` and affine in
``u`` for fixed ``xhat``.  Both affine representations are exposed since the
adversarial search works in ``u`` and cut assembly works in ``xhat``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import Instance, matrix_to_json
from .optkernel import LinearProgram, SolverError, solve_lp

__all__ = [
    "IndexMap",
    "AffineStatePolicy",
    "TwoStageProblem",
    "StageAffine",
    "build_two_stage",
    "evaluate_state_policy",
    "first_stage_value",
    "AdrSolution",
    "build_adr_counterpart",
    "solve_adr",
    "history_columns",
]


def history_columns(inst, mask=None):
    """Global ``u`` indices a stage-``t`` rule may use (1-based ``t`` -> list index t-1).

    Causal: only coordinates of ``u_1..u_t``.  Unobserved coordinates of
    ``inst.U`` are always excluded; ``mask(t, j) -> bool`` can drop more.
    """
    cols = []
    offs = inst.u_offsets()
    for t in range(1, inst.T + 1):
        end = offs[t - 1] + inst.stages[t - 1].n_u
        keep = [j for j in range(end) if inst.U.observed[j] and (mask is None or mask(t, j))]
        if len(keep) > end:
            raise AssertionError("non-causal history")
        cols.append(np.array(keep, dtype=int))
    return cols


@dataclass(frozen=True)
class IndexMap:
    """Flat layout of ``xhat``: ``[x | P_1 .. P_T (row-major) | q_1 .. q_T]``."""

    n_x: int
    n_s: tuple
    n_hist: tuple

    def __post_init__(self):
        p_off, k = [], self.n_x
        for ns, nh in zip(self.n_s, self.n_hist):
            p_off.append(k)
            k += ns * nh
        q_off = []
        for ns in self.n_s:
            q_off.append(k)
            k += ns
        object.__setattr__(self, "p_off", tuple(p_off))
        object.__setattr__(self, "q_off", tuple(q_off))
        object.__setattr__(self, "dim", k)

    @property
    def T(self):
        return len(self.n_s)

    def x_slice(self):
        return slice(0, self.n_x)

    def P_slice(self, t):
        o = self.p_off[t - 1]
        return slice(o, o + self.n_s[t - 1] * self.n_hist[t - 1])

    def q_slice(self, t):
        o = self.q_off[t - 1]
        return slice(o, o + self.n_s[t - 1])

    def split(self, xhat):
        xhat = np.asarray(xhat, dtype=float)
        if xhat.shape != (self.dim,):
            raise ValueError(f"xhat has shape {xhat.shape}, expected ({self.dim},)")
        x = xhat[self.x_slice()]
        P = [xhat[self.P_slice(t)].reshape(self.n_s[t - 1], self.n_hist[t - 1])
             for t in range(1, self.T + 1)]
        q = [xhat[self.q_slice(t)] for t in range(1, self.T + 1)]
        return x, P, q

    def join(self, x, P, q):
        out = np.zeros(self.dim)
        out[self.x_slice()] = x
        for t in range(1, self.T + 1):
            out[self.P_slice(t)] = np.asarray(P[t - 1], dtype=float).reshape(-1)
            out[self.q_slice(t)] = q[t - 1]
        return out

    def labels(self):
        names = [f"x[{i}]" for i in range(self.n_x)]
        for t in range(1, self.T + 1):
            names += [f"P{t}[{i},{j}]" for i in range(self.n_s[t - 1])
                      for j in range(self.n_hist[t - 1])]
        for t in range(1, self.T + 1):
            names += [f"q{t}[{i}]" for i in range(self.n_s[t - 1])]
        return names


@dataclass
class AffineStatePolicy:
    P: list
    q: list
    hist: list

    def to_json(self):
        return {
            "P": [matrix_to_json(np.atleast_2d(P)) for P in self.P],
            "q": [np.asarray(q, dtype=float).tolist() for q in self.q],
            "history": [h.tolist() for h in self.hist],
        }


def evaluate_state_policy(pol, u):
    """State trajectory ``[s_1, ..., s_T]`` of ``pol`` under realization ``u``."""
    u = np.asarray(u, dtype=float)
    need = max((int(h.max()) + 1 for h in pol.hist if h.size), default=0)
    if u.ndim != 1 or u.size < need:
        raise ValueError(f"realization has {u.size} entries, policy reads index {need - 1}")
    return [P @ u[h] + q for P, q, h in zip(pol.P, pol.q, pol.hist)]


@dataclass(frozen=True)
class StageAffine:
    """``r = r0 + R v`` and ``rho = rho0 + Rho v`` for the free vector ``v``."""

    r0: np.ndarray
    R: np.ndarray
    rho0: np.ndarray
    Rho: np.ndarray


@dataclass
class StageResult:
    status: str
    value: float
    phi: np.ndarray
    pi: np.ndarray
    y: np.ndarray | None


@dataclass
class TwoStageProblem:
    inst: Instance
    imap: IndexMap
    hist: list
    lo: np.ndarray = field(default=None)
    hi: np.ndarray = field(default=None)
    mask: object = None

    @property
    def T(self):
        return self.inst.T

    @property
    def dim(self):
        return self.imap.dim

    def stage(self, t):
        return self.inst.stages[t - 1]

    # -- first stage ---------------------------------------------------------

    def first_stage_cost(self):
        """Coefficient vector of ``F0(xhat) = c'x + sum_t d_t'q_t``."""
        g = np.zeros(self.dim)
        g[self.imap.x_slice()] = self.inst.c
        for t in range(1, self.T + 1):
            g[self.imap.q_slice(t)] = self.stage(t).dt
        return g

    def first_stage_value(self, xhat):
        return float(self.first_stage_cost() @ np.asarray(xhat, dtype=float))

    def policy(self, xhat):
        _, P, q = self.imap.split(xhat)
        return AffineStatePolicy(P=P, q=q, hist=self.hist)

    # -- affine in u for fixed xhat -------------------------------------------

    def rhs_in_u(self, xhat):
        """Per-stage :class:`StageAffine` in ``u`` plus the objective term.

        Returns ``(stages, cost_u)`` where ``sum_t d_t'P_t u^t = cost_u @ u``.
        """
        inst = self.inst
        x, P, q = self.imap.split(xhat)
        nu = inst.n_u_total
        out = []
        cost_u = np.zeros(nu)
        for t in range(1, self.T + 1):
            st = self.stage(t)
            us = inst.u_slice(t)
            h = self.hist[t - 1]
            R = np.zeros((st.n_eq, nu))
            R[:, us] += st.Ht
            R[:, h] -= st.At @ P[t - 1]
            r0 = st.h0 - st.Tt @ x - st.At @ q[t - 1]
            if t == 1:
                r0 = r0 - st.Bt @ inst.s0
            else:
                R[:, self.hist[t - 2]] -= st.Bt @ P[t - 2]
                r0 = r0 - st.Bt @ q[t - 2]
            Rho = np.zeros((st.n_in, nu))
            Rho[:, us] += st.Mt
            Rho[:, h] -= st.Et @ P[t - 1]
            rho0 = st.m0 - st.Lt @ x - st.Et @ q[t - 1]
            cost_u[h] += P[t - 1].T @ st.dt
            out.append(StageAffine(r0, R, rho0, Rho))
        return out, cost_u

    # -- affine in xhat for fixed u -------------------------------------------

    def rhs_in_xhat(self, u):
        """Per-stage :class:`StageAffine` in ``xhat`` plus the objective gradient.

        Returns ``(stages, grad)`` with ``F0(xhat) + sum_t d_t'P_t u^t = grad @ xhat``.
        """
        inst, im = self.inst, self.imap
        u = np.asarray(u, dtype=float)
        n = self.dim
        out = []
        grad = self.first_stage_cost()
        for t in range(1, self.T + 1):
            st = self.stage(t)
            uh = u[self.hist[t - 1]]
            R = np.zeros((st.n_eq, n))
            R[:, im.x_slice()] = -st.Tt
            R[:, im.P_slice(t)] = -np.kron(st.At, uh)
            R[:, im.q_slice(t)] = -st.At
            r0 = st.h0 + st.Ht @ u[inst.u_slice(t)]
            if t == 1:
                r0 = r0 - st.Bt @ inst.s0
            else:
                R[:, im.P_slice(t - 1)] -= np.kron(st.Bt, u[self.hist[t - 2]])
                R[:, im.q_slice(t - 1)] -= st.Bt
            Rho = np.zeros((st.n_in, n))
            Rho[:, im.x_slice()] = -st.Lt
            Rho[:, im.P_slice(t)] = -np.kron(st.Et, uh)
            Rho[:, im.q_slice(t)] = -st.Et
            rho0 = st.m0 + st.Mt @ u[inst.u_slice(t)]
            grad[im.P_slice(t)] += np.kron(st.dt, uh)
            out.append(StageAffine(r0, R, rho0, Rho))
        return out, grad

    # -- recourse at fixed (xhat, u) -------------------------------------------

    def stage_rhs(self, xhat, u):
        stages, grad = self.rhs_in_xhat(u)
        xhat = np.asarray(xhat, dtype=float)
        return ([(sa.r0 + sa.R @ xhat, sa.rho0 + sa.Rho @ xhat) for sa in stages],
                float(grad @ xhat))

    def kkt_rows(self, t):
        """Rows of stage ``t`` that involve ``y`` (nonzero ``W``/``G`` row).

        The remaining rows only restrict ``(xhat, u)``.
        """
        st = self.stage(t)
        eq = np.nonzero(np.any(st.Wt != 0.0, axis=1))[0] if st.n_eq else np.zeros(0, int)
        ineq = np.nonzero(np.any(st.Gt != 0.0, axis=1))[0] if st.n_in else np.zeros(0, int)
        return eq, ineq

    def recourse_lp(self, t, r, rho):
        st = self.stage(t)
        return LinearProgram(c=st.ft, A_eq=st.Wt, b_eq=r, A_ge=st.Gt, b_ge=rho,
                             lo=np.full(st.n_y, -np.inf), hi=np.full(st.n_y, np.inf))

    def feasibility_lp(self, t, r, rho):
        """Stage LP with elastic slacks ``a+, a-, beta``; always feasible."""
        st = self.stage(t)
        ne, ni, ny = st.n_eq, st.n_in, st.n_y
        c = np.concatenate([np.zeros(ny), np.ones(2 * ne + ni)])
        A_eq = np.hstack([st.Wt, np.eye(ne), -np.eye(ne), np.zeros((ne, ni))])
        A_ge = np.hstack([st.Gt, np.zeros((ni, 2 * ne)), np.eye(ni)])
        lo = np.concatenate([np.full(ny, -np.inf), np.zeros(2 * ne + ni)])
        return LinearProgram(c=c, A_eq=A_eq, b_eq=r, A_ge=A_ge, b_ge=rho, lo=lo,
                             hi=np.full(c.size, np.inf))

    def solve_stage(self, t, r, rho, tol=1e-9, backend="highs"):
        """Recourse LP of stage ``t`` at right-hand sides ``(r, rho)``."""
        st = self.stage(t)
        eq, ineq = self.kkt_rows(t)
        zero_eq = np.setdiff1d(np.arange(st.n_eq), eq)
        zero_in = np.setdiff1d(np.arange(st.n_in), ineq)
        phi = np.zeros(st.n_eq)
        pi = np.zeros(st.n_in)
        if (np.any(np.abs(r[zero_eq]) > tol * (1 + np.abs(r[zero_eq])))
                or np.any(rho[zero_in] > tol * (1 + np.abs(rho[zero_in])))):
            return StageResult("infeasible", np.inf, phi, pi, None)
        lp = LinearProgram(c=st.ft, A_eq=st.Wt[eq], b_eq=r[eq], A_ge=st.Gt[ineq],
                           b_ge=rho[ineq], lo=np.full(st.n_y, -np.inf),
                           hi=np.full(st.n_y, np.inf))
        sol = solve_lp(lp, backend=backend)
        if sol.status == "infeasible":
            return StageResult("infeasible", np.inf, phi, pi, None)
        if sol.status == "unbounded":
            raise SolverError(f"stage {t} recourse LP unbounded; F is -inf")
        phi[eq] = sol.dual_eq
        pi[ineq] = sol.dual_ge
        return StageResult("optimal", sol.fun, phi, pi, sol.x)

    def solve_stage_elastic(self, t, r, rho, backend="highs"):
        """Elastic stage LP; value is the stage contribution to omega."""
        st = self.stage(t)
        sol = solve_lp(self.feasibility_lp(t, r, rho), backend=backend)
        if sol.status != "optimal":
            raise SolverError(f"stage {t} feasibility LP returned {sol.status}")
        return StageResult("optimal", sol.fun, sol.dual_eq, sol.dual_ge, sol.x[:st.n_y])

    def recourse(self, xhat, u, backend="highs"):
        """Stagewise recourse at ``(xhat, u)``.

        Returns ``(value, stage_results)``; ``value`` includes
        ``F0(xhat) + sum_t d_t'P_t u^t`` and is ``inf`` when some stage is
        infeasible.
        """
        rhs, base = self.stage_rhs(xhat, u)
        res = [self.solve_stage(t, r, rho, backend=backend)
               for t, (r, rho) in enumerate(rhs, start=1)]
        return base + sum(s.value for s in res), res

    def feasibility(self, xhat, u, backend="highs"):
        """``omega`` at a fixed ``u``: total elastic slack over all stages."""
        rhs, _ = self.stage_rhs(xhat, u)
        res = [self.solve_stage_elastic(t, r, rho, backend=backend)
               for t, (r, rho) in enumerate(rhs, start=1)]
        return sum(s.value for s in res), res

    def joint_recourse_value(self, xhat, u):
        """Recourse value from one LP over all stages' ``y`` at once."""
        rhs, base = self.stage_rhs(xhat, u)
        blocks = [self.recourse_lp(t, r, rho) for t, (r, rho) in enumerate(rhs, start=1)]
        from scipy.linalg import block_diag

        lp = LinearProgram(
            c=np.concatenate([b.c for b in blocks]),
            A_eq=block_diag(*[b.A_eq for b in blocks]), b_eq=np.concatenate([b.b_eq for b in blocks]),
            A_ge=block_diag(*[b.A_ge for b in blocks]), b_ge=np.concatenate([b.b_ge for b in blocks]),
            lo=np.concatenate([b.lo for b in blocks]), hi=np.concatenate([b.hi for b in blocks]))
        sol = solve_lp(lp)
        if sol.status == "infeasible":
            return np.inf
        return base + sol.fun

    def subgradient(self, u, duals):
        """Gradient in ``xhat`` of the recourse value at fixed ``u`` and stage duals.

        ``duals`` holds ``(phi_t, pi_t)`` per stage.  The result includes the
        first-stage cost, so it is a subgradient of ``F``.
        """
        stages, grad = self.rhs_in_xhat(u)
        g = grad.copy()
        for sa, (phi, pi) in zip(stages, duals):
            g += sa.R.T @ phi + sa.Rho.T @ pi
        return g

    def feasibility_subgradient(self, u, duals):
        stages, _ = self.rhs_in_xhat(u)
        g = np.zeros(self.dim)
        for sa, (phi, pi) in zip(stages, duals):
            g += sa.R.T @ phi + sa.Rho.T @ pi
        return g


def build_two_stage(inst, mask=None, box=1e3):
    """Two-stage problem of ``inst`` with a trust box ``[-box, box]`` on ``xhat``.

    The box applies to rule coefficients; ``x`` keeps its own bounds
    intersected with the box.
    """
    hist = history_columns(inst, mask)
    imap = IndexMap(n_x=inst.n_x, n_s=tuple(st.n_s for st in inst.stages),
                    n_hist=tuple(h.size for h in hist))
    lo = np.full(imap.dim, -float(box))
    hi = np.full(imap.dim, float(box))
    lo[imap.x_slice()] = np.maximum(lo[imap.x_slice()], inst.x_bounds.lo)
    hi[imap.x_slice()] = np.minimum(hi[imap.x_slice()], inst.x_bounds.hi)
    return TwoStageProblem(inst=inst, imap=imap, hist=hist, lo=lo, hi=hi, mask=mask)


def first_stage_value(ts, xhat):
    return ts.first_stage_value(xhat)


# ----------------------------------------------------------------------------
# fully affine baseline (robust counterpart)
# ----------------------------------------------------------------------------


@dataclass
class AdrSolution:
    status: str
    value: float = np.inf
    xhat: np.ndarray | None = None
    Y: list | None = None
    y0: list | None = None
    lp_size: tuple = (0, 0)


class _Builder:
    """Accumulates robust rows ``alpha(z)'u + beta(z) >= 0  for all u in U``.

    A row is a matrix ``K`` of shape ``(n_u + 1, n_z + 1)``: the expression
    is ``[u; 1]' K [z; 1]``.
    """

    def __init__(self, n_u, n_z):
        self.n_u, self.n_z = n_u, n_z
        self.rows = []

    def new(self):
        return np.zeros((self.n_u + 1, self.n_z + 1))

    def add(self, K):
        self.rows.append(K)


def build_adr_counterpart(inst, mask=None, box=None):
    """Robust counterpart LP of the fully affine policy class.

    Decision vector ``z = [xhat | Y_1..Y_T | y0_1..y0_T | tau]`` with
    ``y_t(u) = Y_t u^t + y0_t`` on the same causal histories as the state
    rules.  Every ``for all u in U`` row is replaced by its LP dual over
    ``{D u <= e, lo <= u <= hi}``; equality rows are enforced as two
    inequalities, which is exact for any polytope.

    Returns ``(lp, layout)``; the optimal value of ``lp`` is ``v_ADR``.
    """
    ts = build_two_stage(inst, mask=mask, box=box if box is not None else np.inf)
    im = ts.imap
    nu = inst.n_u_total
    y_off, k = [], im.dim
    for t in range(1, inst.T + 1):
        y_off.append(k)
        k += inst.stages[t - 1].n_y * ts.hist[t - 1].size
    y0_off = []
    for t in range(1, inst.T + 1):
        y0_off.append(k)
        k += inst.stages[t - 1].n_y
    tau = k
    nz = k + 1
    ONE = nz  # column of the constant in K
    B = _Builder(nu, nz)

    def add_s_terms(K, t, coef, sign=1.0):
        """Add ``sign * coef @ s_t(u)`` to every row of stacked ``K`` (one per coef row)."""
        h = ts.hist[t - 1]
        ns = inst.stages[t - 1].n_s
        for r in range(coef.shape[0]):
            for i in range(ns):
                a = sign * coef[r, i]
                if a == 0.0:
                    continue
                for jj, j in enumerate(h):
                    K[r][j, im.p_off[t - 1] + i * h.size + jj] += a
                K[r][nu, im.q_off[t - 1] + i] += a

    def add_y_terms(K, t, coef, sign=1.0):
        h = ts.hist[t - 1]
        ny = inst.stages[t - 1].n_y
        for r in range(coef.shape[0]):
            for i in range(ny):
                a = sign * coef[r, i]
                if a == 0.0:
                    continue
                for jj, j in enumerate(h):
                    K[r][j, y_off[t - 1] + i * h.size + jj] += a
                K[r][nu, y0_off[t - 1] + i] += a

    for t in range(1, inst.T + 1):
        st = inst.stages[t - 1]
        us = inst.u_slice(t)
        # equality rows: lhs - rhs == 0
        K = [B.new() for _ in range(st.n_eq)]
        for r in range(st.n_eq):
            K[r][nu, :inst.n_x] += st.Tt[r]
            K[r][nu, ONE] -= st.h0[r]
            K[r][us, ONE] -= st.Ht[r]
            if t == 1:
                K[r][nu, ONE] += st.Bt[r] @ inst.s0
        add_s_terms(K, t, st.At)
        if t > 1:
            add_s_terms(K, t - 1, st.Bt)
        add_y_terms(K, t, st.Wt)
        for Kr in K:
            B.add(Kr)
            B.add(-Kr)
        # inequality rows: lhs - rhs >= 0
        K = [B.new() for _ in range(st.n_in)]
        for r in range(st.n_in):
            K[r][nu, :inst.n_x] += st.Lt[r]
            K[r][nu, ONE] -= st.m0[r]
            K[r][us, ONE] -= st.Mt[r]
        add_s_terms(K, t, st.Et)
        add_y_terms(K, t, st.Gt)
        for Kr in K:
            B.add(Kr)
    # epigraph: tau - sum_t (d's + f'y) >= 0
    K = [B.new()]
    K[0][nu, tau] = 1.0
    for t in range(1, inst.T + 1):
        st = inst.stages[t - 1]
        add_s_terms(K, t, st.dt.reshape(1, -1), sign=-1.0)
        add_y_terms(K, t, st.ft.reshape(1, -1), sign=-1.0)
    B.add(K[0])

    # dualize: alpha'u + beta >= 0 on U  <=>  exists lam, mu, nu >= 0:
    #   -D'lam + mu - nu = alpha,   beta - e'lam + lo'mu - hi'nu >= 0
    U = inst.U
    nD = U.D.shape[0]
    nrow = len(B.rows)
    per = nD + 2 * nu
    nvar = nz + nrow * per
    A_eq = np.zeros((nrow * nu, nvar))
    b_eq = np.zeros(nrow * nu)
    A_ge = np.zeros((nrow, nvar))
    b_ge = np.zeros(nrow)
    for k, K in enumerate(B.rows):
        base = nz + k * per
        lam = slice(base, base + nD)
        mu = slice(base + nD, base + nD + nu)
        nv = slice(base + nD + nu, base + per)
        rows = slice(k * nu, (k + 1) * nu)
        # alpha(z) - (-D'lam + mu - nu) = 0
        A_eq[rows, :nz] = K[:nu, :nz]
        b_eq[rows] = -K[:nu, ONE]
        A_eq[rows, lam] = U.D.T
        A_eq[rows, mu] = -np.eye(nu)
        A_eq[rows, nv] = np.eye(nu)
        A_ge[k, :nz] = K[nu, :nz]
        b_ge[k] = -K[nu, ONE]
        A_ge[k, lam] = -U.e
        A_ge[k, mu] = U.lo
        A_ge[k, nv] = -U.hi

    c = np.zeros(nvar)
    c[:inst.n_x] = inst.c
    c[tau] = 1.0
    lo = np.concatenate([np.full(nz, -np.inf), np.zeros(nrow * per)])
    hi = np.full(nvar, np.inf)
    lo[:inst.n_x] = inst.x_bounds.lo
    hi[:inst.n_x] = inst.x_bounds.hi
    if box is not None:
        lo[inst.n_x:im.dim] = -box
        hi[inst.n_x:im.dim] = box
    Cx, bx = inst.x_bounds.as_inequalities()
    if Cx.shape[0]:
        Cz = np.zeros((Cx.shape[0], nvar))
        Cz[:, :inst.n_x] = Cx
        A_ge = np.vstack([A_ge, Cz])
        b_ge = np.concatenate([b_ge, bx])
    lp = LinearProgram(c=c, A_eq=A_eq, b_eq=b_eq, A_ge=A_ge, b_ge=b_ge, lo=lo, hi=hi)
    layout = {"ts": ts, "y_off": y_off, "y0_off": y0_off, "tau": tau, "nz": nz}
    return lp, layout


def solve_adr(inst, mask=None, box=None):
    """Solve the fully affine counterpart; ``status`` is propagated from the LP."""
    lp, lay = build_adr_counterpart(inst, mask=mask, box=box)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        return AdrSolution(status=sol.status, lp_size=lp.A_eq.shape)
    ts = lay["ts"]
    z = sol.x
    Y, y0 = [], []
    for t in range(1, inst.T + 1):
        ny = inst.stages[t - 1].n_y
        nh = ts.hist[t - 1].size
        o = lay["y_off"][t - 1]
        Y.append(z[o:o + ny * nh].reshape(ny, nh))
        o = lay["y0_off"][t - 1]
        y0.append(z[o:o + ny])
    return AdrSolution(status="optimal", value=float(sol.fun), xhat=z[:ts.dim].copy(),
                       Y=Y, y0=y0, lp_size=(lp.A_eq.shape[0] + lp.A_ge.shape[0], lp.n))


def policy_to_json(ts, xhat):
    x, P, q = ts.imap.split(xhat)
    return json.dumps({"x": x.tolist(), **ts.policy(xhat).to_json()})
