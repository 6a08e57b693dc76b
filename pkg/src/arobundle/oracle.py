"""Brute-force ground truth for small instances.

The recourse value at fixed ``xhat`` is convex in ``u`` (an LP value is
convex in its right-hand side, and the ``d'P u`` term is linear), so its
maximum over a polytope is attained at a vertex.  Enumerating vertices turns
every worst-case quantity into a finite maximum of plain LPs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Instance, Polytope, StageData, XBounds
from .optkernel import LinearProgram, SolverError, solve_lp

VERTEX_TOL = 1e-9


class PolicyInfeasibleError(SolverError):
    """No rule in the policy class keeps the recourse feasible for all ``u``."""


@dataclass
class VertexList:
    vertices: np.ndarray
    exhaustive: bool = True

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)


def _halfspaces(U):
    n = U.dim
    A = np.vstack([U.D, np.eye(n), -np.eye(n)])
    b = np.concatenate([U.e, U.hi, -U.lo])
    return A, b


def enumerate_vertices(U, cap=4096, max_subsets=2_000_000):
    """All vertices of ``U`` by solving every ``dim``-subset of active rows.

    Returns a partial list with ``exhaustive=False`` when more than ``cap``
    vertices exist or the subset count exceeds ``max_subsets``.
    """
    A, b = _halfspaces(U)
    m, n = A.shape
    if n == 0:
        return VertexList(np.zeros((1, 0)))
    if math.comb(m, n) > max_subsets:
        return VertexList(np.zeros((0, n)), exhaustive=False)
    found = []
    for rows in itertools.combinations(range(m), n):
        Asub = A[list(rows)]
        if np.linalg.matrix_rank(Asub) < n:
            continue
        v = np.linalg.solve(Asub, b[list(rows)])
        if np.any(A @ v > b + 1e-9 * (1 + np.abs(b))):
            continue
        if any(np.max(np.abs(v - w)) <= VERTEX_TOL for w in found):
            continue
        found.append(v)
        if len(found) > cap:
            return VertexList(np.array(found[:cap]), exhaustive=False)
    return VertexList(np.array(found).reshape(-1, n))


def vertex_rank(U, v, tol=1e-8):
    A, b = _halfspaces(U)
    active = np.abs(A @ v - b) <= tol * (1 + np.abs(b))
    return int(np.linalg.matrix_rank(A[active])) if active.any() else 0


# ----------------------------------------------------------------------------
# exact worst-case values
# ----------------------------------------------------------------------------


@dataclass
class OracleValue:
    value: float  # Q (recourse part) or omega
    vertex: np.ndarray
    feasible: bool
    table: list = field(default_factory=list)  # (vertex, value) per vertex

    def to_json(self):
        return json.dumps({
            "value": None if not np.isfinite(self.value) else self.value,
            "feasible": self.feasible,
            "vertex": self.vertex.tolist(),
            "table": [{"u": list(map(float, u)), "value": None if not np.isfinite(v) else float(v)}
                      for u, v in self.table],
        }, indent=2)


def _vertices(ts, vertices):
    if vertices is None:
        vertices = enumerate_vertices(ts.inst.U)
    if not vertices.exhaustive:
        raise ValueError("vertex enumeration incomplete; oracle not applicable")
    return vertices


def brute_force_Q(ts, xhat, vertices=None):
    """``Q(xhat)`` as the maximum over vertices of the recourse value.

    When some vertex has an infeasible recourse LP, ``feasible`` is False and
    ``vertex`` is that witness.
    """
    vertices = _vertices(ts, vertices)
    F0 = ts.first_stage_value(xhat)
    table = []
    for v in vertices:
        total, _ = ts.recourse(xhat, v)
        table.append((v, total - F0))
        if not np.isfinite(total):
            return OracleValue(np.inf, v, False, table)
    k = int(np.argmax([val for _, val in table]))
    return OracleValue(table[k][1], table[k][0], True, table)


def brute_force_omega(ts, xhat, vertices=None):
    vertices = _vertices(ts, vertices)
    table = [(v, ts.feasibility(xhat, v)[0]) for v in vertices]
    k = int(np.argmax([val for _, val in table]))
    return OracleValue(max(0.0, table[k][1]), table[k][0], True, table)


def brute_force_F(ts, xhat, vertices=None):
    res = brute_force_Q(ts, xhat, vertices)
    return ts.first_stage_value(xhat) + res.value if res.feasible else np.inf


@dataclass
class TwoStageOptimum:
    value: float
    xhat: np.ndarray
    n_vertices: int


def brute_force_two_stage(ts, vertices=None, max_vertices=64):
    """Exact optimum of the two-stage rule problem by one epigraph LP.

    Variables are ``(xhat, theta, y^v)`` with an independent recourse copy
    per vertex; ``theta`` bounds every vertex's recourse cost.  The trust box
    of ``ts`` applies to ``xhat``.
    """
    vertices = _vertices(ts, vertices)
    if len(vertices) > max_vertices:
        raise ValueError(f"{len(vertices)} vertices exceed the oracle limit {max_vertices}")
    inst = ts.inst
    n = ts.dim
    ny = sum(st.n_y for st in inst.stages)
    nv = len(vertices)
    N = n + 1 + nv * ny
    theta = n
    F0 = ts.first_stage_cost()
    c = np.zeros(N)
    c[:n] = F0
    c[theta] = 1.0
    Aeq, beq, Age, bge = [], [], [], []
    for k, v in enumerate(vertices):
        stages, grad = ts.rhs_in_xhat(v)
        off = n + 1 + k * ny
        epi = np.zeros(N)
        epi[theta] = 1.0
        epi[:n] = -(grad - F0)
        for t, sa in enumerate(stages, start=1):
            st = ts.stage(t)
            ys = slice(off, off + st.n_y)
            for i in range(st.n_eq):
                row = np.zeros(N)
                row[ys] = st.Wt[i]
                row[:n] = -sa.R[i]
                Aeq.append(row)
                beq.append(sa.r0[i])
            for i in range(st.n_in):
                row = np.zeros(N)
                row[ys] = st.Gt[i]
                row[:n] = -sa.Rho[i]
                Age.append(row)
                bge.append(sa.rho0[i])
            epi[ys] = -st.ft
            off += st.n_y
        Age.append(epi)
        bge.append(0.0)
    C, b = inst.x_bounds.as_inequalities()
    for row_c, rhs in zip(C, b):
        row = np.zeros(N)
        row[ts.imap.x_slice()] = row_c
        Age.append(row)
        bge.append(rhs)
    lo = np.concatenate([ts.lo, [-np.inf], np.full(nv * ny, -np.inf)])
    hi = np.concatenate([ts.hi, [np.inf], np.full(nv * ny, np.inf)])
    lp = LinearProgram(c=c, A_eq=np.array(Aeq).reshape(-1, N), b_eq=np.array(beq),
                       A_ge=np.array(Age).reshape(-1, N), b_ge=np.array(bge), lo=lo, hi=hi)
    sol = solve_lp(lp)
    if sol.status == "infeasible":
        raise PolicyInfeasibleError("two-stage rule problem infeasible on the trust box")
    if sol.status != "optimal":
        raise SolverError(f"oracle epigraph LP returned {sol.status}")
    return TwoStageOptimum(float(sol.fun), sol.x[:n].copy(), nv)


# ----------------------------------------------------------------------------
# subgradient checks
# ----------------------------------------------------------------------------


@dataclass
class FiniteDiffReport:
    directions: int
    differentiable: int
    matched: int
    subgradient_ok: int
    rows: list = field(default_factory=list)

    @property
    def match_rate(self):
        return self.matched / self.differentiable if self.differentiable else 1.0

    @property
    def subgradient_rate(self):
        return self.subgradient_ok / self.directions if self.directions else 1.0


def finite_diff_check(F, xhat, g, n_dirs=10, h=1e-5, rng=None, kink_tol=1e-4):
    """Compare central differences of ``F`` with ``<g, d>`` on random unit directions.

    A direction whose forward and backward quotients differ by more than
    ``kink_tol * (1 + |<g, d>|)`` crosses a kink; only the subgradient
    inequality ``F(x + h d) >= F(x) + h <g, d> - 1e-8`` is checked there.
    """
    rng = np.random.default_rng(rng)
    xhat = np.asarray(xhat, dtype=float)
    f0 = F(xhat)
    rep = FiniteDiffReport(n_dirs, 0, 0, 0)
    for _ in range(n_dirs):
        d = rng.standard_normal(xhat.size)
        nrm = np.linalg.norm(d)
        d = d / nrm if nrm > 0 else d
        fp, fm = F(xhat + h * d), F(xhat - h * d)
        gd = float(g @ d)
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        smooth = abs(fwd - bwd) <= kink_tol * (1 + abs(gd))
        central = (fp - fm) / (2 * h)
        match = abs(central - gd) <= 1e-4 * (1 + abs(gd))
        sub = fp >= f0 + h * gd - 1e-8 and fm >= f0 - h * gd - 1e-8
        rep.differentiable += smooth
        rep.matched += smooth and match
        rep.subgradient_ok += sub
        rep.rows.append({"gd": gd, "central": central, "smooth": bool(smooth),
                         "match": bool(match), "subgradient": bool(sub)})
    return rep


# ----------------------------------------------------------------------------
# random small instances
# ----------------------------------------------------------------------------


def random_instance(seed, T=2, n_x=1, n_s=1, n_extra=1, n_rand=1, budget=False,
                    d_scale=0.5, complete=True, name=None):
    """Small instance with complete, bounded recourse.

    Every stage has elastic columns ``y+ - y-`` on its balance rows and one
    penalty column ``z`` that relaxes the random inequality rows and keeps
    the state near the origin, so every ``(xhat, u)`` has a finite recourse
    value and the optimum of the rule problem is interior to a moderate box.
    With ``complete=False`` the ``y-`` columns are dropped from the balance
    rows, so some ``(xhat, u)`` have no feasible recourse.
    """
    rng = np.random.default_rng(seed)
    n_u = 1
    stages = []
    for t in range(1, T + 1):
        ne = n_s
        ny = 2 * ne + 1 + n_extra
        zc = 2 * ne
        # rows: y >= 0 (ny), |s| <= bound via z (2 n_s), random rows (n_rand)
        ni = ny + 2 * n_s + n_rand
        W = np.hstack([np.eye(ne), -np.eye(ne) if complete else np.zeros((ne, ne)),
                       np.zeros((ne, 1)),
                       rng.uniform(-1, 1, (ne, n_extra))])
        G = np.zeros((ni, ny))
        G[:ny] = np.eye(ny)
        E = np.zeros((ni, n_s))
        m0 = np.zeros(ni)
        E[ny:ny + n_s] = np.eye(n_s)
        E[ny + n_s:ny + 2 * n_s] = -np.eye(n_s)
        G[ny:ny + 2 * n_s, zc] = 1.0
        m0[ny:ny + 2 * n_s] = -rng.uniform(1, 3, 2 * n_s)
        r = slice(ny + 2 * n_s, ni)
        E[r] = rng.uniform(-1, 1, (n_rand, n_s))
        G[r, zc] = 1.0
        G[r, 2 * ne + 1:] = rng.uniform(-1, 1, (n_rand, n_extra))
        m0[r] = rng.uniform(-1, 1, n_rand)
        Mt = np.zeros((ni, n_u))
        Mt[r] = rng.uniform(-1, 1, (n_rand, n_u))
        f = np.concatenate([rng.uniform(1, 3, 2 * ne), [rng.uniform(3, 5)],
                            rng.uniform(0.5, 2, n_extra)])
        stages.append(StageData(
            t=t, n_s=n_s, n_y=ny, n_u=n_u,
            Tt=rng.uniform(-1, 1, (ne, n_x)), At=np.eye(ne) + 0.3 * rng.uniform(-1, 1, (ne, n_s)),
            Bt=rng.uniform(-1, 1, (ne, n_s)), Wt=W, h0=rng.uniform(-1, 1, ne),
            Ht=rng.uniform(-1, 1, (ne, n_u)), Lt=np.vstack([np.zeros((ny + 2 * n_s, n_x)),
                                                            rng.uniform(-1, 1, (n_rand, n_x))]),
            Et=E, Gt=G, m0=m0, Mt=Mt, dt=rng.uniform(-d_scale, d_scale, n_s), ft=f))
    nu = T * n_u
    lo = rng.uniform(-1, 0, nu)
    hi = lo + rng.uniform(0.5, 1.5, nu)
    if budget and nu > 1:
        D = np.ones((1, nu))
        e = np.array([0.5 * (lo.sum() + hi.sum())])
    else:
        D, e = np.zeros((0, nu)), np.zeros(0)
    U = Polytope(D, e, lo, hi)
    return Instance(T=T, n_x=n_x, c=rng.uniform(-1, 1, n_x), s0=rng.uniform(-1, 1, n_s),
                    x_bounds=XBounds(np.full(n_x, -2.0), np.full(n_x, 2.0)), stages=tuple(stages),
                    U=U, name=name or f"random-{seed}")


# ----------------------------------------------------------------------------
# bound ordering
# ----------------------------------------------------------------------------


@dataclass
class ChainReport:
    """``v_S <= v_TPB <= v_ADR``; the fully adaptive optimum lies in ``[v_S, v_TPB]``."""

    v_S: float
    v_TPB: float
    v_ADR: float
    v_TPB_exact: float | None
    ok: bool
    violations: list
    adr_status: str = "optimal"

    def to_json(self):
        def num(v):
            return None if v is None or not np.isfinite(v) else float(v)
        return json.dumps({"v_S": num(self.v_S), "v_TPB": num(self.v_TPB), "v_ADR": num(self.v_ADR),
                           "v_TPB_exact": num(self.v_TPB_exact), "ok": self.ok,
                           "violations": self.violations, "adr_status": self.adr_status,
                           "v_star_bracket": [num(self.v_S), num(self.v_TPB)]}, indent=2)


def check_theorem3(inst, config=None, box=1e3, scenario_cap=64, tol=1e-6, exact=True):
    """Compute the three bounds of ``inst`` and check their order within ``tol``."""
    from .bundle import BundleConfig, run
    from .lowerbound import harvest_scenarios, scenario_lower_bound
    from .transform import build_two_stage, solve_adr

    config = config or BundleConfig(trust_box=box)
    ts = build_two_stage(inst, box=box)
    adr = solve_adr(inst, box=box)
    try:
        sol = run(ts, config)
    except SolverError as exc:
        raise SolverError(f"two-stage bound failed: {exc}") from exc
    try:
        S = harvest_scenarios(sol.log, inst.U, cap=scenario_cap)
        v_S = scenario_lower_bound(inst, S, cap=scenario_cap).value
    except SolverError as exc:
        raise SolverError(f"scenario lower bound failed: {exc}") from exc
    v_exact = None
    if exact:
        verts = enumerate_vertices(inst.U)
        if verts.exhaustive and len(verts) <= 64:
            v_exact = brute_force_two_stage(ts, verts).value
    v_ADR = adr.value if adr.status == "optimal" else np.inf
    violations = []
    if v_S > sol.UB + tol:
        violations.append(f"v_S {v_S:.10g} > v_TPB {sol.UB:.10g}")
    if sol.UB > v_ADR + tol:
        violations.append(f"v_TPB {sol.UB:.10g} > v_ADR {v_ADR:.10g}")
    if v_exact is not None and v_S > v_exact + tol:
        violations.append(f"v_S {v_S:.10g} > exact v_TPB {v_exact:.10g}")
    if v_exact is not None and v_exact > v_ADR + tol:
        violations.append(f"exact v_TPB {v_exact:.10g} > v_ADR {v_ADR:.10g}")
    return ChainReport(v_S, sol.UB, v_ADR, v_exact, not violations, violations, adr.status)
