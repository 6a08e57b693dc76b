"""Proximal bundle method over the flat rule vector ``xhat``.

Each iteration solves the regularised master

    min  eta + ||xhat - z||^2 / (2 t)
    s.t. eta >= value_l + <g_l, xhat - xhat_l>      (optimality cuts)
         0   >= value_l + <g_l, xhat - xhat_l>      (feasibility cuts)
         xhat in the trust box and the first-stage region

around the stability center ``z``, then evaluates the worst case at the
master optimum.  The center moves only when the realised decrease is at
least ``m`` times the predicted decrease ``delta``.
"""

from __future__ import annotations

import csv
import io
import logging
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .adversarial import Cut, extract_subgradient, feasibility_value, solve_worst_case
from .optkernel import QuadraticProgram, SolverError, solve_qp

log = logging.getLogger(__name__)

OMEGA_TOL = 1e-8
LINEARIZATION_TOL = 1e-6
IDENTITY_TOL = 1e-6


class CorruptedCutError(RuntimeError):
    """A cut overestimates F at the stability center."""


class PolicyClassInfeasibleError(SolverError):
    """No rule with recourse feasible for every ``u`` was found."""


@dataclass
class BundleConfig:
    delta_tol: float = 1e-5  # relative to 1 + |F(z0)|
    m: float = 0.1
    t0: float = 1.0
    t_min: float = 1e-3
    t_shrink: float = 0.5
    t_grow: float = 2.0  # > 1 lengthens t after exact serious steps (t then not monotone)
    t_max: float = 1e3
    grow_ratio: float = 0.9
    max_iter: int = 200
    trust_box: float = 1e3
    enlarge_box: bool = True
    max_enlargements: int = 2
    pool_cap: int | None = None
    bootstrap_budget: int = 50
    node_limit: int | None = None
    check_identities: bool = False  # raise instead of warn on identity violations
    t_stop: float = 10.0  # reference step of the stopping test

    def __post_init__(self):
        if not 0.0 < self.m < 1.0:
            raise ValueError("m must lie in (0, 1)")
        if not 0.0 < self.t_min <= self.t0:
            raise ValueError("need 0 < t_min <= t0")
        if not 0.0 < self.t_shrink <= 1.0:
            raise ValueError("t_shrink must lie in (0, 1]")
        if self.t_grow < 1.0 or self.t_max < self.t0:
            raise ValueError("need t_grow >= 1 and t_max >= t0")
        if self.delta_tol < 0:
            raise ValueError("delta_tol must be nonnegative")


@dataclass
class Evaluation:
    kind: str  # "value" or "infeasible"
    value: float  # F(xhat) or omega(xhat)
    cut: Cut
    result: object
    time_ms: float = 0.0


@dataclass
class IterationRecord:
    k: int
    query: np.ndarray
    step: str  # serious | null | feasibility | start | stop
    value: float  # F or omega at the query
    delta: float = np.nan
    g_norm: float = np.nan
    e_hat: float = np.nan
    t: float = np.nan
    time_ms: float = 0.0
    u: np.ndarray | None = None  # worst case found at the query
    source: str = ""  # "sup" or "fp"
    inexact: bool = False
    box_active: bool = False
    identity_ii: float = np.nan  # model value residual of the aggregate identity
    identity_iii: float = np.nan  # delta residual of the aggregate identity
    center_value: float = np.nan


@dataclass
class BundleState:
    k: int
    center: np.ndarray
    center_value: float
    t: float
    cuts: list = field(default_factory=list)
    log: list = field(default_factory=list)

    @property
    def optimality_cuts(self):
        return [c for c in self.cuts if c.kind == "optimality"]

    @property
    def feasibility_cuts(self):
        return [c for c in self.cuts if c.kind == "feasibility"]


@dataclass
class MasterResult:
    xhat: np.ndarray
    eta: float
    alpha: np.ndarray  # multipliers of the optimality cuts (sum to one)
    feas_duals: np.ndarray
    other_duals: np.ndarray  # box and first-stage rows
    box_active: bool


@dataclass
class Solution:
    xhat: np.ndarray
    F: float
    UB: float
    iterations: int
    converged: bool
    log: list
    cuts: list
    harvested: list
    F0: float = np.nan
    trust_box: float = np.nan
    box_active: bool = False

    def write_log_csv(self, fh=None, deterministic=False):
        return iterations_csv(self.log, fh, deterministic)


# ----------------------------------------------------------------------------
# oracle calls
# ----------------------------------------------------------------------------


def evaluate_F(ts, xhat, omega_tol=OMEGA_TOL, node_limit=None):
    """Feasibility first; if the recourse is always feasible, the worst-case value."""
    t0 = time.perf_counter()
    fp = feasibility_value(ts, xhat, node_limit=node_limit)
    if fp.value > omega_tol:
        cut = extract_subgradient(fp, ts, xhat)
        return Evaluation("infeasible", fp.value, cut, fp, 1e3 * (time.perf_counter() - t0))
    sup = solve_worst_case(ts, xhat, node_limit=node_limit)
    if not sup.recourse_feasible:
        # the FP missed a witness within tolerance; report the SUP point as one
        omega, stages = ts.feasibility(xhat, sup.u)
        fp = replace(fp, u=sup.u, value=max(omega, omega_tol * 2),
                     phi=[s.phi for s in stages], pi=[s.pi for s in stages])
        cut = extract_subgradient(fp, ts, xhat)
        return Evaluation("infeasible", fp.value, cut, fp, 1e3 * (time.perf_counter() - t0))
    cut = extract_subgradient(sup, ts, xhat)
    return Evaluation("value", cut.value, cut, sup, 1e3 * (time.perf_counter() - t0))


# ----------------------------------------------------------------------------
# master problem
# ----------------------------------------------------------------------------


def _first_stage_rows(ts):
    C, b = ts.inst.x_bounds.as_inequalities()
    A = np.zeros((C.shape[0], ts.dim))
    A[:, ts.imap.x_slice()] = C
    return A, b


def build_master(ts, state):
    """Master QP over ``v = (xhat, eta)``.

    Row order: optimality cuts, feasibility cuts, box lower, box upper,
    first-stage rows.  Without optimality cuts this is the bootstrap
    projection ``min ||xhat - z||^2`` under the feasibility cuts.
    """
    n = ts.dim
    opt, feas = state.optimality_cuts, state.feasibility_cuts
    rows, rhs = [], []
    for c in opt:
        rows.append(np.concatenate([-c.grad, [1.0]]))
        rhs.append(c.value - c.grad @ c.point)
    for c in feas:
        rows.append(np.concatenate([-c.grad, [0.0]]))
        rhs.append(c.value - c.grad @ c.point)
    I = np.hstack([np.eye(n), np.zeros((n, 1))])
    finite_lo = np.isfinite(ts.lo)
    finite_hi = np.isfinite(ts.hi)
    A_box = np.vstack([I[finite_lo], -I[finite_hi]])
    b_box = np.concatenate([ts.lo[finite_lo], -ts.hi[finite_hi]])
    Cx, bx = _first_stage_rows(ts)
    Cx = np.hstack([Cx, np.zeros((Cx.shape[0], 1))])
    A_ge = np.vstack([np.array(rows).reshape(-1, n + 1), A_box, Cx])
    b_ge = np.concatenate([np.array(rhs, dtype=float), b_box, bx])
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = np.eye(n) / state.t
    q = np.zeros(n + 1)
    q[:n] = -state.center / state.t
    if opt:
        q[n] = 1.0
    else:
        # bootstrap: eta is pinned to zero and the objective is the projection
        A_ge = np.vstack([A_ge, np.eye(1, n + 1, n), -np.eye(1, n + 1, n)])
        b_ge = np.concatenate([b_ge, [0.0, 0.0]])
    qp = QuadraticProgram(H=H, q=q, A_ge=A_ge, b_ge=b_ge)
    qp.layout = {"n_opt": len(opt), "n_feas": len(feas), "n_box": A_box.shape[0]}
    return qp


def solve_master(ts, state):
    qp = build_master(ts, state)
    n = ts.dim
    lay = qp.layout
    x0 = None
    opt = state.optimality_cuts
    if opt:
        eta0 = max(c.evaluate(state.center) for c in opt)
        x0 = np.concatenate([state.center, [eta0]])
    sol = solve_qp(qp, x0=x0)
    if sol.status != "optimal":
        raise SolverError(f"master QP returned {sol.status}")
    no, nf = lay["n_opt"], lay["n_feas"]
    duals = sol.dual_ge
    alpha = duals[:no].copy()
    if no and alpha.sum() > 0:
        alpha = alpha / alpha.sum()
    other = duals[no + nf:]
    box_active = bool(np.any(other > 1e-9)) or bool(np.any(duals[no:no + nf] > 1e-9))
    xhat = sol.x[:n]
    eta = model_value(opt, xhat) if opt else 0.0
    return MasterResult(xhat=xhat, eta=eta, alpha=alpha, feas_duals=duals[no:no + nf],
                        other_duals=other, box_active=box_active)


def model_value(cuts, xhat):
    """Cutting-plane model: max over optimality cuts at ``xhat``."""
    return max(c.evaluate(xhat) for c in cuts)


def expected_decrease(center_value, model_at_next, xhat_next, center, t):
    d = np.asarray(xhat_next) - np.asarray(center)
    return float(center_value - model_at_next - d @ d / (2.0 * t))


def step_decision(center_value, F_next, delta, m):
    return "serious" if center_value - F_next >= m * delta else "null"


def linearization_errors(cuts, center, center_value, tol=LINEARIZATION_TOL):
    e = np.array([center_value - c.evaluate(center) for c in cuts])
    if e.size and e.min() < -tol:
        raise CorruptedCutError(f"linearization error {e.min():.3g} below -{tol:g}")
    return e


def aggregate_certificate(cuts, alpha, errors):
    """``(g_hat, e_hat)`` as the multiplier-weighted cut gradients and errors."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        return np.zeros(0), 0.0
    G = np.array([c.grad for c in cuts])
    return alpha @ G, float(alpha @ errors)


def _stop_measure(delta, g_hat, e_hat, t, box_active, config):
    """Expected decrease re-evaluated at a step no shorter than ``t_stop``.

    Null steps shrink ``t`` and with it ``delta``, which alone would stop the
    method while the aggregate subgradient is still large.
    """
    t_ref = config.t_stop
    if box_active or t >= t_ref:
        return delta
    return max(delta, e_hat + 0.5 * t_ref * float(g_hat @ g_hat))


def update_t(t, step, t_min, t_shrink, ratio=0.0, t_grow=1.0, t_max=np.inf, grow_ratio=0.9):
    """Shrink after null steps; lengthen after serious steps with ``ratio >= grow_ratio``.

    ``ratio`` is the realised over the predicted decrease.  Without growth a
    serious step moves the center by about ``t * |g_hat|``, so on a long
    linear stretch of F the method would crawl at the floor ``t_min``.
    """
    if step == "null":
        return max(t_min, t_shrink * t)
    if step == "serious" and ratio >= grow_ratio:
        return min(t_max, t_grow * t)
    return t


def _aggregate_pool(state, alpha, xhat_next):
    """Replace unused optimality cuts by their aggregate (a valid minorant)."""
    opt = state.optimality_cuts
    keep = [c for c, a in zip(opt, alpha) if a > 1e-12]
    g = sum(a * c.grad for c, a in zip(opt, alpha))
    val = sum(a * c.evaluate(xhat_next) for c, a in zip(opt, alpha))
    agg = Cut("optimality", np.asarray(xhat_next).copy(), float(val), np.asarray(g), None)
    state.cuts = keep + [agg] + state.feasibility_cuts


# ----------------------------------------------------------------------------
# main loop
# ----------------------------------------------------------------------------


def initial_center(ts, config):
    """Center from the fully affine baseline, clipped to the trust box."""
    from .transform import solve_adr

    adr = solve_adr(ts.inst, box=config.trust_box, mask=ts.mask)
    if adr.status == "optimal" and adr.xhat.size == ts.dim:
        return np.clip(adr.xhat, ts.lo, ts.hi), adr
    return np.clip(np.zeros(ts.dim), ts.lo, ts.hi), adr


def _bootstrap(ts, z0, config, state):
    """Project onto feasibility cuts until a point with omega = 0 is found."""
    x = z0.copy()
    for j in range(config.bootstrap_budget):
        ev = evaluate_F(ts, x, node_limit=config.node_limit)
        res = ev.result
        state.log.append(IterationRecord(
            k=state.k, query=x.copy(), step="feasibility" if ev.kind == "infeasible" else "start",
            value=ev.value, t=state.t, time_ms=ev.time_ms, u=res.u.copy(), source=res.kind,
            inexact=res.inexact))
        state.cuts.append(ev.cut)
        if ev.kind == "value":
            return x, ev.value
        state.k += 1
        mr = solve_master(ts, replace(state, center=z0, cuts=list(state.feasibility_cuts)))
        x = mr.xhat
    raise PolicyClassInfeasibleError(
        f"no rule with feasible recourse found after {config.bootstrap_budget} feasibility cuts")


def _run_once(ts, config, z0, cuts=()):
    t_start = time.perf_counter()
    state = BundleState(k=0, center=z0.copy(), center_value=np.nan, t=config.t0,
                        cuts=[c for c in cuts])
    z, Fz = _bootstrap(ts, z0, config, state)
    state.center, state.center_value = z, Fz
    F0 = Fz
    tol = config.delta_tol * (1.0 + abs(F0))
    converged = False
    while state.k < config.max_iter:
        state.k += 1
        mr = solve_master(ts, state)
        opt = state.optimality_cuts
        model_next = model_value(opt, mr.xhat)
        delta = expected_decrease(state.center_value, model_next, mr.xhat, state.center, state.t)
        errors = linearization_errors(opt, state.center, state.center_value)
        g_hat, e_hat = aggregate_certificate(opt, mr.alpha, errors)
        rec = IterationRecord(k=state.k, query=mr.xhat.copy(), step="stop", value=np.nan,
                              delta=delta, g_norm=float(np.linalg.norm(g_hat)), e_hat=e_hat,
                              t=state.t, box_active=mr.box_active,
                              center_value=state.center_value)
        if not mr.box_active:
            rec.identity_ii = model_next - (state.center_value - state.t * g_hat @ g_hat - e_hat)
            rec.identity_iii = delta - (0.5 * state.t * g_hat @ g_hat + e_hat)
            scale = 1.0 + abs(state.center_value)
            if max(abs(rec.identity_ii), abs(rec.identity_iii)) > IDENTITY_TOL * scale:
                msg = (f"aggregate identities violated at k={state.k}: "
                       f"{rec.identity_ii:.3g}, {rec.identity_iii:.3g}")
                if config.check_identities:
                    raise AssertionError(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
        if delta < -1e-9 * (1.0 + abs(state.center_value)):
            warnings.warn(f"negative expected decrease {delta:.3g}", RuntimeWarning, stacklevel=2)
        if _stop_measure(delta, g_hat, e_hat, state.t, mr.box_active, config) <= tol:
            rec.value = state.center_value
            state.log.append(rec)
            converged = True
            break
        ev = evaluate_F(ts, mr.xhat, node_limit=config.node_limit)
        res = ev.result
        rec.value, rec.time_ms = ev.value, ev.time_ms
        rec.u, rec.source, rec.inexact = res.u.copy(), res.kind, res.inexact
        state.cuts.append(ev.cut)
        if ev.kind == "infeasible":
            rec.step = "feasibility"
        else:
            rec.step = step_decision(state.center_value, ev.value, delta, config.m)
            ratio = (state.center_value - ev.value) / delta if delta > 0 else 0.0
            if rec.step == "serious":
                state.center, state.center_value = mr.xhat.copy(), ev.value
            state.t = update_t(state.t, rec.step, config.t_min, config.t_shrink, ratio,
                               config.t_grow, config.t_max, config.grow_ratio)
        state.log.append(rec)
        if config.pool_cap is not None and len(state.optimality_cuts) > config.pool_cap:
            _aggregate_pool(state, np.append(mr.alpha, 0.0) if ev.kind == "value" else mr.alpha,
                            mr.xhat)
        log.debug("k=%d step=%s F=%.6g delta=%.3g t=%.3g", state.k, rec.step, rec.value,
                  delta, state.t)
    box_active = bool(np.any(np.isclose(state.center, ts.lo, atol=1e-6) & (np.abs(ts.lo) >= config.trust_box))
                      or np.any(np.isclose(state.center, ts.hi, atol=1e-6) & (np.abs(ts.hi) >= config.trust_box)))
    return state, F0, converged, box_active, time.perf_counter() - t_start


def run(ts, config=None, z0=None):
    """Proximal bundle method on ``ts``; returns the best center found.

    When the final center touches the trust box, the box is enlarged tenfold
    and the method restarts from that center, keeping all cuts (they are
    global minorants).
    """
    from .transform import build_two_stage

    config = config or BundleConfig()
    if z0 is None:
        z0, _ = initial_center(ts, config)
    z0 = np.clip(np.asarray(z0, dtype=float), ts.lo, ts.hi)
    cuts, logs = [], []
    box = config.trust_box
    for attempt in range(config.max_enlargements + 1):
        state, F0, converged, box_active, _ = _run_once(ts, config, z0, cuts)
        logs.extend(state.log)
        if not (box_active and config.enlarge_box) or attempt == config.max_enlargements:
            break
        box *= 10.0
        warnings.warn(f"trust box active at the solution; enlarging to {box:g}", RuntimeWarning,
                      stacklevel=2)
        ts = build_two_stage(ts.inst, mask=ts.mask, box=box)
        config = replace(config, trust_box=box)
        cuts, z0 = state.cuts, state.center
    harvested = [r.u for r in logs if r.u is not None]
    return Solution(xhat=state.center.copy(), F=state.center_value, UB=state.center_value,
                    iterations=state.k, converged=converged, log=logs, cuts=state.cuts,
                    harvested=harvested, F0=F0, trust_box=box, box_active=box_active)


ITER_COLUMNS = ["k", "step", "F_or_omega", "delta", "g_norm", "e_hat", "t_k", "time_ms"]


def iterations_csv(log_records, fh=None, deterministic=False):
    """Iteration log as CSV; ``deterministic`` zeroes wall times."""
    out = fh or io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ITER_COLUMNS)
    for r in log_records:
        w.writerow([r.k, r.step, _fmt(r.value), _fmt(r.delta), _fmt(r.g_norm), _fmt(r.e_hat),
                    _fmt(r.t), 0 if deterministic else f"{r.time_ms:.3f}"])
    return out.getvalue() if fh is None else None


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.12g}"
