"""Scenario-tree lower bounds and the relative optimality gap.

Replacing the uncertainty set by finitely many realisations relaxes the
robust problem, so the scenario-tree LP value is a lower bound on every
policy class.  Decisions stay nonanticipative: two scenarios that agree on
the observed data up to stage ``t`` share their stage-``t`` decisions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .optkernel import LinearProgram, SolverError, solve_lp

DEDUP_TOL = 1e-7
PREFIX_TOL = 1e-9
SCENARIO_CAP = 64


class EmptyScenarioSetError(ValueError):
    pass


class SamplerDegenerateError(RuntimeError):
    pass


class UndefinedGapError(ZeroDivisionError):
    pass


@dataclass
class ScenarioSet:
    scenarios: np.ndarray  # (N, n_u)
    tags: list = field(default_factory=list)

    def __post_init__(self):
        self.scenarios = np.atleast_2d(np.asarray(self.scenarios, dtype=float))
        if not self.tags:
            self.tags = ["harvested"] * len(self.scenarios)

    def __len__(self):
        return self.scenarios.shape[0]

    def head(self, n):
        return ScenarioSet(self.scenarios[:n], self.tags[:n])

    def to_json(self):
        return json.dumps([{"u": list(map(float, u)), "tag": tag}
                           for u, tag in zip(self.scenarios, self.tags)])


def _dedup(points, tol):
    kept = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= tol for q in kept):
            kept.append(p)
    return kept


def harvest_scenarios(log, U=None, cap=None, tol=DEDUP_TOL):
    """Distinct worst-case realisations found by the adversarial solves of a run.

    ``log`` is a sequence of iteration records (anything with a ``u``
    attribute) or of plain vectors.  With ``cap`` the most recent distinct
    scenarios are kept.  Points are clipped into the box of ``U`` when given.
    """
    pts = []
    for rec in log:
        u = getattr(rec, "u", rec)
        if u is not None:
            pts.append(np.asarray(u, dtype=float))
    if not pts:
        raise EmptyScenarioSetError("no adversarial solves in the log")
    if U is not None:
        pts = [np.clip(p, U.lo, U.hi) for p in pts]
    # deduplicate from the most recent backwards so the cap keeps late scenarios
    kept = _dedup(pts[::-1], tol)
    if cap is not None:
        kept = kept[:cap]
    kept = kept[::-1]
    return ScenarioSet(np.array(kept), ["harvested"] * len(kept))


def sample_uniform_scenarios(U, n, seed=None, max_trials=10**6, batch=4096):
    """``n`` uniform points of ``U`` by rejection from its bounding box."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    out, trials = [], 0
    while len(out) < n:
        if trials >= max_trials:
            rate = len(out) / trials
            if rate < 1e-4:
                raise SamplerDegenerateError(
                    f"acceptance rate {rate:.2g} after {trials} trials; tighten the box of U")
            max_trials *= 2
        cand = rng.uniform(U.lo, U.hi, size=(batch, U.dim))
        trials += batch
        ok = np.all(cand @ U.D.T <= U.e, axis=1) if U.D.shape[0] else np.ones(batch, bool)
        out.extend(cand[ok][: n - len(out)])
    return ScenarioSet(np.array(out), ["sampled"] * n)


# ----------------------------------------------------------------------------
# scenario tree
# ----------------------------------------------------------------------------


@dataclass
class ScenarioTree:
    """``group_of[t-1, i]`` is the stage-``t`` decision group of scenario ``i``."""

    group_of: np.ndarray  # (T, N) int
    n_groups: list
    scenarios: ScenarioSet

    @property
    def T(self):
        return self.group_of.shape[0]

    def groups(self, t):
        g = self.group_of[t - 1]
        return [np.nonzero(g == k)[0] for k in range(self.n_groups[t - 1])]

    def check_refinement(self):
        for t in range(1, self.T):
            for members in self.groups(t + 1):
                if np.unique(self.group_of[t - 1, members]).size != 1:
                    return False
        return True


def build_scenario_tree(S, inst, tol=PREFIX_TOL):
    """Group scenarios by equal observed prefixes ``u_1..u_t`` (max-norm ``tol``)."""
    if len(S) == 0:
        raise EmptyScenarioSetError("empty scenario set")
    N = len(S)
    obs = inst.U.observed
    group_of = np.zeros((inst.T, N), dtype=int)
    n_groups = []
    parent = np.zeros(N, dtype=int)
    for t in range(1, inst.T + 1):
        cols = [j for j in range(inst.u_slice(t).start, inst.u_slice(t).stop) if obs[j]]
        reps = []  # (parent group, representative stage data)
        for i in range(N):
            key = S.scenarios[i, cols]
            for k, (p, r) in enumerate(reps):
                if p == parent[i] and np.all(np.abs(key - r) <= tol):
                    group_of[t - 1, i] = k
                    break
            else:
                reps.append((parent[i], key))
                group_of[t - 1, i] = len(reps) - 1
        n_groups.append(len(reps))
        parent = group_of[t - 1].copy()
    return ScenarioTree(group_of, n_groups, S)


# ----------------------------------------------------------------------------
# scenario-tree LP
# ----------------------------------------------------------------------------


@dataclass
class LowerBound:
    value: float
    x: np.ndarray
    n_scenarios: int
    n_groups: list
    lp_size: tuple


def solve_stmarmilp(inst, tree):
    """Scenario-tree LP: shared ``x`` and epigraph, per-group states and recourse."""
    S = tree.scenarios.scenarios
    N = S.shape[0]
    nx = inst.n_x
    off = nx + 1  # theta after x
    s_off, y_off = [], []
    for t, st in enumerate(inst.stages, start=1):
        ng = tree.n_groups[t - 1]
        s_off.append(off)
        off += ng * st.n_s
        y_off.append(off)
        off += ng * st.n_y
    n = off
    theta = nx

    def s_slice(t, g):
        st = inst.stages[t - 1]
        return slice(s_off[t - 1] + g * st.n_s, s_off[t - 1] + (g + 1) * st.n_s)

    def y_slice(t, g):
        st = inst.stages[t - 1]
        return slice(y_off[t - 1] + g * st.n_y, y_off[t - 1] + (g + 1) * st.n_y)

    Aeq, beq, Age, bge = [], [], [], []
    seen = set()
    for i in range(N):
        epi = np.zeros(n)
        epi[theta] = 1.0
        for t, st in enumerate(inst.stages, start=1):
            g = tree.group_of[t - 1, i]
            ut = S[i, inst.u_slice(t)]
            ss, ys = s_slice(t, g), y_slice(t, g)
            epi[ss] -= st.dt
            epi[ys] -= st.ft
            gp = tree.group_of[t - 2, i] if t > 1 else -1
            key = (t, g, gp, tuple(np.round(ut, 12)))
            if key in seen:
                continue
            seen.add(key)
            E = np.zeros((st.n_eq, n))
            E[:, :nx] = st.Tt
            E[:, ss] += st.At
            E[:, ys] += st.Wt
            rhs = st.h0 + st.Ht @ ut
            if t == 1:
                rhs = rhs - st.Bt @ inst.s0
            else:
                E[:, s_slice(t - 1, gp)] += st.Bt
            Aeq.append(E)
            beq.append(rhs)
            I = np.zeros((st.n_in, n))
            I[:, :nx] = st.Lt
            I[:, ss] += st.Et
            I[:, ys] += st.Gt
            Age.append(I)
            bge.append(st.m0 + st.Mt @ ut)
        Age.append(epi[None, :])
        bge.append(np.zeros(1))
    C, b = inst.x_bounds.as_inequalities()
    if C.shape[0]:
        Cx = np.zeros((C.shape[0], n))
        Cx[:, :nx] = C
        Age.append(Cx)
        bge.append(b)
    c = np.zeros(n)
    c[:nx] = inst.c
    c[theta] = 1.0
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    lo[:nx], hi[:nx] = inst.x_bounds.lo, inst.x_bounds.hi
    lp = LinearProgram(c=c, A_eq=np.vstack(Aeq) if Aeq else np.zeros((0, n)),
                       b_eq=np.concatenate(beq) if beq else np.zeros(0),
                       A_ge=np.vstack(Age), b_ge=np.concatenate(bge), lo=lo, hi=hi)
    sol = solve_lp(lp)
    if sol.status != "optimal":
        raise SolverError(f"scenario-tree LP {sol.status}")
    return LowerBound(float(sol.fun), sol.x[:nx].copy(), N, list(tree.n_groups),
                      (lp.A_eq.shape[0] + lp.A_ge.shape[0], n))


def scenario_lower_bound(inst, S, cap=SCENARIO_CAP):
    if cap is not None and len(S) > cap:
        S = ScenarioSet(S.scenarios[-cap:], S.tags[-cap:])
    return solve_stmarmilp(inst, build_scenario_tree(S, inst))


def optimality_gap(UB, LB):
    """``(UB - LB) / (0.5 (UB + LB))``."""
    den = 0.5 * (UB + LB)
    if abs(UB + LB) <= 1e-12:
        raise UndefinedGapError("UB + LB is zero; relative gap undefined")
    return (UB - LB) / den
