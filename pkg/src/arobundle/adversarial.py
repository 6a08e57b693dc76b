"""Worst-case recourse and feasibility evaluation by KKT + big-M MILPs.

For a fixed ``xhat`` the adversary maximises the stagewise recourse value
over ``u`` in ``U``.  The inner minimisation is replaced by its KKT system
(primal feasibility, dual feasibility, complementarity) and complementarity
is linearised with binaries, giving one MILP in ``(u, y, phi, pi, w)``.

The MILP only locates the worst case ``u*``.  Values and duals reported
downstream come from re-solving the stage LPs exactly at ``u*``, so every cut
is a true minorant even when a big-M bound or the node limit made the MILP
inexact.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .optkernel import (LinearProgram, MixedIntegerProgram, NodeLimitError, SolverError,
                        solve_lp, solve_milp)

log = logging.getLogger(__name__)

DUAL_CAP = 1e4
DEFAULT_M = 1e6


class BigMWarning(UserWarning):
    """A big-M bound or dual cap is (nearly) active at the MILP optimum."""


@dataclass
class BigM:
    """Bounds used to linearise complementarity.

    ``slack[t]`` bounds the primal slack of each inequality row of stage
    ``t``; ``phi_lo/phi_hi/pi_hi`` box the stage duals.  ``capped`` marks
    dual bounds that fell back to :data:`DUAL_CAP` because the dual
    polyhedron is unbounded in that coordinate.
    """

    slack: list
    phi_lo: list | None = None
    phi_hi: list | None = None
    pi_hi: list | None = None
    elastic: list | None = None
    defaulted: bool = False
    capped: bool = False

    def scaled(self, factor):
        """Every bound widened by ``factor`` (``factor >= 1``)."""
        def widen(arrs, sign):
            if arrs is None:
                return None
            return [a + sign * (factor - 1.0) * np.abs(a) for a in arrs]
        return BigM(slack=[m * factor for m in self.slack], phi_lo=widen(self.phi_lo, -1),
                    phi_hi=widen(self.phi_hi, 1), pi_hi=widen(self.pi_hi, 1),
                    elastic=None if self.elastic is None else [m * factor for m in self.elastic],
                    defaulted=self.defaulted, capped=self.capped)


@dataclass
class AdversarialResult:
    kind: str  # "sup" or "fp"
    u: np.ndarray
    value: float  # Q(xhat) for "sup", omega(xhat) for "fp"
    phi: list
    pi: list
    y: list
    w: list
    milp_value: float = np.nan
    milp_bound: float = np.nan
    gap: float = 0.0
    inexact: bool = False
    flags: list = field(default_factory=list)
    bigm: BigM | None = None
    recourse_feasible: bool = True


@dataclass
class Cut:
    """Affine minorant ``value + <grad, xhat - point>``."""

    kind: str  # "optimality" or "feasibility"
    point: np.ndarray
    value: float
    grad: np.ndarray
    u: np.ndarray
    inexact: bool = False

    def evaluate(self, xhat):
        return float(self.value + self.grad @ (np.asarray(xhat) - self.point))


# ----------------------------------------------------------------------------
# big-M
# ----------------------------------------------------------------------------


def _box_range(c0, C, lo, hi):
    """Range of ``c0 + C u`` over the box ``[lo, hi]`` (row-wise)."""
    upper = c0 + np.maximum(C * lo, C * hi).sum(axis=1)
    lower = c0 + np.minimum(C * lo, C * hi).sum(axis=1)
    return lower, upper


def _u_constraints(U, n_total, offset=0):
    A = np.zeros((U.D.shape[0], n_total))
    A[:, offset:offset + U.dim] = -U.D
    return A, -U.e


def stage_dual_bounds(ts, t, cap=DUAL_CAP):
    """Coordinate ranges of the stage-``t`` dual polyhedron.

    The polyhedron ``{W'phi + G'pi = f, pi >= 0}`` over the KKT rows does
    not depend on ``xhat`` or ``u``, so the result is cached on ``ts``.
    Unbounded coordinates are set to ``cap``.
    """
    cache = ts.__dict__.setdefault("_dual_bounds", {})
    if (t, cap) in cache:
        return cache[(t, cap)]
    st = ts.stage(t)
    eq, ineq = ts.kkt_rows(t)
    ne, ni = eq.size, ineq.size
    phi_lo, phi_hi = np.full(st.n_eq, 0.0), np.full(st.n_eq, 0.0)
    pi_hi = np.zeros(st.n_in)
    capped = False
    if ne + ni:
        A = np.hstack([st.Wt[eq].T, st.Gt[ineq].T])
        lo = np.concatenate([np.full(ne, -np.inf), np.zeros(ni)])
        hi = np.full(ne + ni, np.inf)
        ext = np.zeros(ne + ni)
        ext_lo = np.zeros(ne + ni)
        for j in range(ne + ni):
            for sign in ((1.0, -1.0) if j < ne else (1.0,)):
                c = np.zeros(ne + ni)
                c[j] = -sign
                sol = solve_lp(LinearProgram(c=c, A_eq=A, b_eq=st.ft, lo=lo, hi=hi))
                if sol.status == "optimal":
                    val = sign * -sol.fun
                elif sol.status == "unbounded":
                    val = sign * cap
                    capped = True
                else:
                    # empty dual: the stage LP is never bounded; leave the cap in place
                    val = sign * cap
                    capped = True
                if sign > 0:
                    ext[j] = val
                else:
                    ext_lo[j] = val
        phi_hi[eq] = ext[:ne]
        phi_lo[eq] = ext_lo[:ne]
        pi_hi[ineq] = np.maximum(ext[ne:], 0.0)
    cache[(t, cap)] = (phi_lo, phi_hi, pi_hi, capped)
    return cache[(t, cap)]


def stage_value_bound(sa, phi_lo, phi_hi, pi_hi, U):
    """Upper bound on the stage LP value over ``u`` in the box of ``U``.

    Uses weak duality with the dual box: the value equals
    ``r(u)'phi + rho(u)'pi`` at an optimal dual inside the box.
    """
    rlo, rhi = _box_range(sa.r0, sa.R, U.lo, U.hi)
    plo, phi_ = _box_range(sa.rho0, sa.Rho, U.lo, U.hi)
    corners = np.stack([rlo * phi_lo, rlo * phi_hi, rhi * phi_lo, rhi * phi_hi])
    return float(corners.max(axis=0).sum() + np.maximum(phi_ * pi_hi, 0.0).sum())


def choose_big_m(ts, xhat, dual_cap=DUAL_CAP, default=DEFAULT_M):
    """Bounds for the SUP complementarity rows at ``xhat``.

    Dual boxes come from :func:`stage_dual_bounds`.  The slack bound of row
    ``i`` is the LP maximum of ``G_i y - rho_i(u)`` over ``u`` in ``U`` and
    feasible ``y`` whose cost is at most the stage value bound; an optimal
    ``y`` always qualifies.  Rows whose maximum is unbounded get ``default``
    and set the ``defaulted`` flag.
    """
    inst = ts.inst
    U = inst.U
    nu = U.dim
    stages, _ = ts.rhs_in_u(xhat)
    out, plo, phi, pih = [], [], [], []
    defaulted = capped = False
    for t, sa in enumerate(stages, start=1):
        st = ts.stage(t)
        eq, ineq = ts.kkt_rows(t)
        dlo, dhi, dpi, dcap = stage_dual_bounds(ts, t, dual_cap)
        plo.append(dlo)
        phi.append(dhi)
        pih.append(dpi)
        capped |= dcap
        M = np.zeros(st.n_in)
        if ineq.size == 0:
            out.append(M)
            continue
        vbar = stage_value_bound(sa, dlo, dhi, dpi, U)
        n = nu + st.n_y
        A_eq = np.hstack([-sa.R[eq], st.Wt[eq]])
        A_ge = np.hstack([-sa.Rho[ineq], st.Gt[ineq]])
        AU, bU = _u_constraints(U, n)
        cost_row = np.concatenate([np.zeros(nu), -st.ft])[None, :]
        lo = np.concatenate([U.lo, np.full(st.n_y, -np.inf)])
        hi = np.concatenate([U.hi, np.full(st.n_y, np.inf)])
        with_cost = (np.vstack([A_ge, AU, cost_row]), np.concatenate([sa.rho0[ineq], bU, [-vbar]]))
        plain = (np.vstack([A_ge, AU]), np.concatenate([sa.rho0[ineq], bU]))
        for i in ineq:
            c = -np.concatenate([-sa.Rho[i], st.Gt[i]])
            sol = None
            for Age, bge in (with_cost, plain):
                sol = solve_lp(LinearProgram(c=c, A_eq=A_eq, b_eq=sa.r0[eq], A_ge=Age,
                                             b_ge=bge, lo=lo, hi=hi))
                if sol.status != "infeasible":
                    break
            if sol.status == "optimal":
                M[i] = max(0.0, -sol.fun - sa.rho0[i])
            else:
                M[i] = default
                defaulted = True
        out.append(M)
    return BigM(slack=out, phi_lo=plo, phi_hi=phi, pi_hi=pih, defaulted=defaulted, capped=capped)


def choose_big_m_fp(ts, xhat, default=DEFAULT_M):
    """Bounds for the elastic feasibility MILP.

    Slack variables are bounded by the stage optimum, itself at most
    ``||r||_1 + ||rho^+||_1`` (dual multipliers lie in ``[-1, 1]``/``[0, 1]``).
    Surplus bounds of inequality rows come from one LP per row.
    """
    inst = ts.inst
    U = inst.U
    nu = U.dim
    stages, _ = ts.rhs_in_u(xhat)
    elastic, surplus = [], []
    defaulted = False
    for t, sa in enumerate(stages, start=1):
        st = ts.stage(t)
        ne, ni, ny = st.n_eq, st.n_in, st.n_y
        rlo, rhi = _box_range(sa.r0, sa.R, U.lo, U.hi)
        plo, phi_ = _box_range(sa.rho0, sa.Rho, U.lo, U.hi)
        bound = np.maximum(np.abs(rlo), np.abs(rhi)).sum() + np.maximum(phi_, 0.0).sum()
        bound = float(bound) + 1.0
        elastic.append(bound)
        M = np.zeros(ni)
        if ni:
            # variables [u, y, a+, a-, beta]
            n = nu + ny + 2 * ne + ni
            A_eq = np.hstack([-sa.R, st.Wt, np.eye(ne), -np.eye(ne), np.zeros((ne, ni))])
            A_ge = np.hstack([-sa.Rho, st.Gt, np.zeros((ni, 2 * ne)), np.eye(ni)])
            AU, bU = _u_constraints(U, n)
            lo = np.concatenate([U.lo, np.full(ny, -np.inf), np.zeros(2 * ne + ni)])
            hi = np.concatenate([U.hi, np.full(ny, np.inf), np.full(2 * ne + ni, bound)])
            for i in range(ni):
                sol = solve_lp(LinearProgram(c=-A_ge[i], A_eq=A_eq, b_eq=sa.r0,
                                             A_ge=np.vstack([A_ge, AU]),
                                             b_ge=np.concatenate([sa.rho0, bU]), lo=lo, hi=hi))
                if sol.status == "optimal":
                    M[i] = max(0.0, -sol.fun - sa.rho0[i])
                else:
                    M[i] = default
                    defaulted = True
        surplus.append(M)
    return BigM(slack=surplus, elastic=elastic, defaulted=defaulted)


# ----------------------------------------------------------------------------
# SUP
# ----------------------------------------------------------------------------


class _Layout:
    def __init__(self):
        self.n = 0
        self.slices = {}

    def add(self, name, size):
        self.slices[name] = slice(self.n, self.n + size)
        self.n += size
        return self.slices[name]

    def __getitem__(self, name):
        return self.slices[name]


class _Rows:
    def __init__(self, n):
        self.n = n
        self.eq, self.beq, self.ge, self.bge = [], [], [], []

    def add_eq(self, blocks, rhs):
        self.eq.append(self._row(blocks, len(rhs)))
        self.beq.append(np.asarray(rhs, dtype=float))

    def add_ge(self, blocks, rhs):
        self.ge.append(self._row(blocks, len(rhs)))
        self.bge.append(np.asarray(rhs, dtype=float))

    def _row(self, blocks, m):
        A = np.zeros((m, self.n))
        for sl, M in blocks:
            A[:, sl] += M
        return A

    def arrays(self):
        def cat(rows, rhs):
            if not rows:
                return np.zeros((0, self.n)), np.zeros(0)
            return np.vstack(rows), np.concatenate(rhs)
        return cat(self.eq, self.beq) + cat(self.ge, self.bge)


def build_sup(ts, xhat, bigm=None):
    """MILP (as a minimisation of ``-Q``) whose optimum is the worst case at ``xhat``.

    Returns ``(mip, layout)``.  Only rows involving ``y`` enter the KKT
    system; the others do not restrict the adversary once ``omega = 0``.
    """
    inst = ts.inst
    U = inst.U
    bigm = bigm if bigm is not None else choose_big_m(ts, xhat)
    stages, cost_u = ts.rhs_in_u(xhat)
    lay = _Layout()
    su = lay.add("u", U.dim)
    kept = []
    for t in range(1, ts.T + 1):
        st = ts.stage(t)
        eq, ineq = ts.kkt_rows(t)
        kept.append((eq, ineq))
        lay.add(f"y{t}", st.n_y)
        lay.add(f"phi{t}", eq.size)
        lay.add(f"pi{t}", ineq.size)
        lay.add(f"w{t}", ineq.size)
    rows = _Rows(lay.n)
    rows.add_ge([(su, -U.D)], -U.e)
    c = np.zeros(lay.n)
    c[su] = -cost_u
    lo = np.full(lay.n, -np.inf)
    hi = np.full(lay.n, np.inf)
    lo[su], hi[su] = U.lo, U.hi
    binaries = []
    for t, (sa, (eq, ineq)) in enumerate(zip(stages, kept), start=1):
        st = ts.stage(t)
        sy, sphi, spi, sw = lay[f"y{t}"], lay[f"phi{t}"], lay[f"pi{t}"], lay[f"w{t}"]
        c[sy] = -st.ft
        W, G = st.Wt[eq], st.Gt[ineq]
        if eq.size:
            rows.add_eq([(sy, W), (su, -sa.R[eq])], sa.r0[eq])
        if ineq.size:
            rows.add_ge([(sy, G), (su, -sa.Rho[ineq])], sa.rho0[ineq])
        if st.n_y:
            rows.add_eq([(sphi, W.T), (spi, G.T)], st.ft)
        lo[sphi], hi[sphi] = bigm.phi_lo[t - 1][eq], bigm.phi_hi[t - 1][eq]
        lo[spi], hi[spi] = 0.0, bigm.pi_hi[t - 1][ineq]
        if ineq.size:
            M = bigm.slack[t - 1][ineq]
            k = ineq.size
            rows.add_ge([(sw, np.diag(bigm.pi_hi[t - 1][ineq])), (spi, -np.eye(k))], np.zeros(k))
            rows.add_ge([(sy, -G), (su, sa.Rho[ineq]), (sw, -np.diag(M))], -sa.rho0[ineq] - M)
            binaries.extend(range(sw.start, sw.stop))
    A_eq, b_eq, A_ge, b_ge = rows.arrays()
    lp = LinearProgram(c=c, A_eq=A_eq, b_eq=b_eq, A_ge=A_ge, b_ge=b_ge, lo=lo, hi=hi)
    lay.kept = kept
    lay.bigm = bigm
    lay.stages_u = stages
    return MixedIntegerProgram(lp, np.array(binaries, dtype=int)), lay


def _run_milp(mip, gap_tol, node_limit):
    try:
        sol = solve_milp(mip, gap_tol=gap_tol, node_limit=node_limit)
        if sol.status == "infeasible":
            # large fallback bounds can defeat the tight integrality tolerance
            log.info("adversarial MILP infeasible at tight tolerance; retrying at 1e-7")
            sol = solve_milp(mip, gap_tol=gap_tol, node_limit=node_limit, feas_tol=1e-7)
        return sol, False
    except NodeLimitError as exc:
        if exc.solution.x is None:
            raise
        log.warning("adversarial MILP stopped at node limit, gap %.3g", exc.solution.gap)
        return exc.solution, True


def solve_worst_case(ts, xhat, bigm=None, gap_tol=1e-6, node_limit=None):
    """Worst-case recourse ``Q(xhat)``; assumes ``omega(xhat) = 0``.

    The reported value is the exact stagewise recourse at the MILP's ``u*``
    and therefore never exceeds the true maximum.
    """
    mip, lay = build_sup(ts, xhat, bigm)
    sol, inexact = _run_milp(mip, gap_tol, node_limit)
    if sol.status != "optimal" and not inexact:
        raise SolverError(f"SUP MILP returned {sol.status}")
    U = ts.inst.U
    u = np.clip(sol.x[lay["u"]], U.lo, U.hi)
    total, stages = ts.recourse(xhat, u)
    flags = []
    if lay.bigm.defaulted:
        flags.append("default_big_m")
    if not np.isfinite(total):
        return AdversarialResult("sup", u, np.inf, [], [], [], [], milp_value=-sol.fun,
                                 inexact=True, flags=flags + ["recourse_infeasible"],
                                 bigm=lay.bigm, recourse_feasible=False)
    Q = total - ts.first_stage_value(xhat)
    w = [np.round(sol.x[lay[f"w{t}"]]) for t in range(1, ts.T + 1)]
    flags += _validate_sup(ts, sol, lay, stages)
    milp_value = -sol.fun
    if milp_value - Q > 1e-6 * (1.0 + abs(Q)):
        flags.append("milp_overestimate")
    return AdversarialResult(
        "sup", u, Q, [s.phi for s in stages], [s.pi for s in stages], [s.y for s in stages],
        w, milp_value=milp_value, milp_bound=-sol.bound, gap=sol.gap, inexact=inexact,
        flags=flags, bigm=lay.bigm)


def _validate_sup(ts, sol, lay, stages):
    """Post-solve check that no big-M bound or dual cap shaped the optimum."""
    flags = []
    bm = lay.bigm
    for t, (eq, ineq) in enumerate(lay.kept, start=1):
        pi = sol.x[lay[f"pi{t}"]]
        phi = sol.x[lay[f"phi{t}"]]
        if bm.capped and (np.any(pi >= (1 - 1e-3) * DUAL_CAP)
                          or np.any(np.abs(phi) >= (1 - 1e-3) * DUAL_CAP)):
            flags.append("dual_cap_active")
        ex = stages[t - 1]
        if (np.any(ex.phi < bm.phi_lo[t - 1] - 1e-6 * (1 + np.abs(bm.phi_lo[t - 1])))
                or np.any(ex.phi > bm.phi_hi[t - 1] + 1e-6 * (1 + np.abs(bm.phi_hi[t - 1])))
                or np.any(ex.pi > bm.pi_hi[t - 1] + 1e-6 * (1 + bm.pi_hi[t - 1]))):
            flags.append("exact_dual_outside_box")
        if ineq.size:
            st = ts.stage(t)
            y = sol.x[lay[f"y{t}"]]
            M = bm.slack[t - 1][ineq]
            slack = st.Gt[ineq] @ y - _rho_at(ts, lay, sol, t)[ineq]
            if np.any((M > 0) & (slack >= (1 - 1e-3) * M) & (slack > 1e-9)):
                flags.append("big_m_tight")
    flags = sorted(set(flags))
    # a tight slack bound derived by LP is exact, so only the fallback warrants a warning
    if "dual_cap_active" in flags or ("big_m_tight" in flags and bm.defaulted):
        warnings.warn(f"big-M validation: {flags}", BigMWarning, stacklevel=3)
    return flags


def _rho_at(ts, lay, sol, t):
    sa = lay.stages_u[t - 1]
    return sa.rho0 + sa.Rho @ sol.x[lay["u"]]


# ----------------------------------------------------------------------------
# FP
# ----------------------------------------------------------------------------


def build_fp(ts, xhat, bigm=None):
    """MILP (minimising ``-omega``) for the worst-case elastic infeasibility."""
    inst = ts.inst
    U = inst.U
    bigm = bigm if bigm is not None else choose_big_m_fp(ts, xhat)
    stages, _ = ts.rhs_in_u(xhat)
    lay = _Layout()
    su = lay.add("u", U.dim)
    for t in range(1, ts.T + 1):
        st = ts.stage(t)
        ne, ni = st.n_eq, st.n_in
        for name, size in (("y", st.n_y), ("ap", ne), ("am", ne), ("b", ni), ("phi", ne),
                           ("pi", ni), ("zp", ne), ("zm", ne), ("zb", ni), ("zs", ni)):
            lay.add(f"{name}{t}", size)
    rows = _Rows(lay.n)
    rows.add_ge([(su, -U.D)], -U.e)
    c = np.zeros(lay.n)
    lo = np.full(lay.n, -np.inf)
    hi = np.full(lay.n, np.inf)
    lo[su], hi[su] = U.lo, U.hi
    binaries = []
    for t, sa in enumerate(stages, start=1):
        st = ts.stage(t)
        ne, ni = st.n_eq, st.n_in
        S = {k: lay[f"{k}{t}"] for k in ("y", "ap", "am", "b", "phi", "pi", "zp", "zm", "zb", "zs")}
        Ma = bigm.elastic[t - 1]
        Ms = bigm.slack[t - 1]
        Ie, Ii = np.eye(ne), np.eye(ni)
        for k in ("ap", "am", "b"):
            c[S[k]] = -1.0
            lo[S[k]], hi[S[k]] = 0.0, Ma
        lo[S["phi"]], hi[S["phi"]] = -1.0, 1.0
        lo[S["pi"]], hi[S["pi"]] = 0.0, 1.0
        if ne:
            rows.add_eq([(S["y"], st.Wt), (S["ap"], Ie), (S["am"], -Ie), (su, -sa.R)], sa.r0)
            rows.add_ge([(S["zp"], Ma * Ie), (S["ap"], -Ie)], np.zeros(ne))
            rows.add_ge([(S["phi"], Ie), (S["zp"], -2 * Ie)], -np.ones(ne))
            rows.add_ge([(S["zm"], Ma * Ie), (S["am"], -Ie)], np.zeros(ne))
            rows.add_ge([(S["phi"], -Ie), (S["zm"], -2 * Ie)], -np.ones(ne))
        if ni:
            rows.add_ge([(S["y"], st.Gt), (S["b"], Ii), (su, -sa.Rho)], sa.rho0)
            rows.add_ge([(S["zb"], Ma * Ii), (S["b"], -Ii)], np.zeros(ni))
            rows.add_ge([(S["pi"], Ii), (S["zb"], -Ii)], np.zeros(ni))
            rows.add_ge([(S["y"], -st.Gt), (S["b"], -Ii), (su, sa.Rho), (S["zs"], -np.diag(Ms))],
                        -sa.rho0 - Ms)
            rows.add_ge([(S["zs"], Ii), (S["pi"], -Ii)], np.zeros(ni))
        if st.n_y:
            rows.add_eq([(S["phi"], st.Wt.T), (S["pi"], st.Gt.T)], np.zeros(st.n_y))
        for k in ("zp", "zm", "zb", "zs"):
            binaries.extend(range(S[k].start, S[k].stop))
    A_eq, b_eq, A_ge, b_ge = rows.arrays()
    lp = LinearProgram(c=c, A_eq=A_eq, b_eq=b_eq, A_ge=A_ge, b_ge=b_ge, lo=lo, hi=hi)
    lay.bigm = bigm
    return MixedIntegerProgram(lp, np.array(binaries, dtype=int)), lay


def feasibility_value(ts, xhat, bigm=None, gap_tol=1e-6, node_limit=None):
    """``omega(xhat)``: worst-case total elastic slack (0 iff recourse always feasible)."""
    mip, lay = build_fp(ts, xhat, bigm)
    sol, inexact = _run_milp(mip, gap_tol, node_limit)
    if sol.status != "optimal" and not inexact:
        raise SolverError(f"FP MILP returned {sol.status}")
    U = ts.inst.U
    u = np.clip(sol.x[lay["u"]], U.lo, U.hi)
    omega, stages = ts.feasibility(xhat, u)
    omega = max(0.0, omega)
    flags = ["default_big_m"] if lay.bigm.defaulted else []
    milp_value = max(0.0, -sol.fun)
    if milp_value - omega > 1e-6 * (1.0 + omega):
        flags.append("milp_overestimate")
    return AdversarialResult(
        "fp", u, omega, [s.phi for s in stages], [s.pi for s in stages], [s.y for s in stages],
        [], milp_value=milp_value, milp_bound=-sol.bound, gap=sol.gap, inexact=inexact,
        flags=flags, bigm=lay.bigm)


def extract_subgradient(res, ts, xhat):
    """Cut at ``xhat`` from the exact duals at the adversary's ``u*``."""
    xhat = np.asarray(xhat, dtype=float).copy()
    duals = list(zip(res.phi, res.pi))
    if res.kind == "sup":
        g = ts.subgradient(res.u, duals)
        value = ts.first_stage_value(xhat) + res.value
        return Cut("optimality", xhat, float(value), g, res.u.copy(), inexact=res.inexact)
    g = ts.feasibility_subgradient(res.u, duals)
    return Cut("feasibility", xhat, float(res.value), g, res.u.copy(), inexact=res.inexact)


def dump_milp(mip, path=None):
    """Matrix JSON of an adversarial MILP for external cross-checks."""
    from .model import matrix_to_json

    lp = mip.lp

    def vec(a):
        return [None if not np.isfinite(v) else float(v) for v in a]

    doc = {"sense": "min", "c": vec(lp.c), "A_eq": matrix_to_json(lp.A_eq), "b_eq": vec(lp.b_eq),
           "A_ge": matrix_to_json(lp.A_ge), "b_ge": vec(lp.b_ge), "lo": vec(lp.lo),
           "hi": vec(lp.hi), "binaries": [int(j) for j in mip.binaries]}
    text = json.dumps(doc, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
