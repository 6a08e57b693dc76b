"""Robust finite-horizon inventory control instances and batch studies.

Per period ``t`` the state is the inventory level ``s_t`` and the recourse
is ``(order_t, aux_t)`` with ``aux_t >= max(hold * s_t, -short * s_t)``:

    s_t - s_{t-1} - order_t = -demand_t

Demand lives in a box around its nominal value, optionally cut by a budget
of deviations.  The budget uses lifted coordinates ``xi_t`` with
``|demand_t - nominal_t| <= dev_t * xi_t`` and ``sum_t xi_t <= budget``;
they are marked unobserved, so rules react to demand only.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model import Instance, Polytope, StageData, XBounds, validate

log = logging.getLogger(__name__)


@dataclass
class InventoryConfig:
    T: int = 5
    init_inventory: float = 0.0
    order_lo: float = 8.0
    order_hi: float = 12.0
    cap: float = 100.0
    hold_cost: float = 1.0
    short_cost: float = 4.0
    order_cost: float = 2.0
    demand_nominal: np.ndarray | float | None = None  # None: drawn per seed
    demand_dev: np.ndarray | float | None = None  # None: a drawn fraction of nominal
    budget: float | None = None  # None: no budget row (plain box)
    nominal_range: tuple = (8.0, 12.0)  # draw range when demand_nominal is None
    dev_range: tuple = (0.4, 0.8)  # drawn deviation as a fraction of nominal

    def __post_init__(self):
        if min(self.hold_cost, self.short_cost, self.order_cost) < 0:
            raise ValueError("costs must be nonnegative")
        if self.order_lo > self.order_hi:
            raise ValueError("order_lo exceeds order_hi")
        if self.demand_dev is not None and np.any(np.asarray(self.demand_dev) < 0):
            raise ValueError("demand_dev must be nonnegative")


def _per_period(v, T, name):
    a = np.broadcast_to(np.asarray(v, dtype=float), (T,)).copy()
    if a.shape != (T,):
        raise ValueError(f"{name} must be a scalar or have {T} entries")
    return a


def generate(cfg, seed=0):
    """Instance for ``cfg``; missing demand data is drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    T = cfg.T
    nom = (rng.uniform(*cfg.nominal_range, T) if cfg.demand_nominal is None
           else _per_period(cfg.demand_nominal, T, "demand_nominal"))
    dev = (nom * rng.uniform(*cfg.dev_range, T) if cfg.demand_dev is None
           else _per_period(cfg.demand_dev, T, "demand_dev"))
    lifted = cfg.budget is not None
    n_u = 2 if lifted else 1
    h, b = cfg.hold_cost, cfg.short_cost
    aux_cap = 2.0 * max(h, b, 1.0) * cfg.cap
    stages = []
    for t in range(1, T + 1):
        H = np.zeros((1, n_u))
        H[0, 0] = -1.0
        # rows: aux >= h s, aux >= -b s, order >= lo, order <= hi, s >= -cap, s <= cap,
        # aux <= aux_cap (redundant; keeps every slack bounded)
        G = np.array([[0, 1], [0, 1], [1, 0], [-1, 0], [0, 0], [0, 0], [0, -1]], dtype=float)
        E = np.array([[-h], [b], [0], [0], [1], [-1], [0]], dtype=float)
        m0 = np.array([0, 0, cfg.order_lo, -cfg.order_hi, -cfg.cap, -cfg.cap, -aux_cap])
        stages.append(StageData(
            t=t, n_s=1, n_y=2, n_u=n_u, Tt=np.zeros((1, 0)), At=np.ones((1, 1)),
            Bt=-np.ones((1, 1)), Wt=np.array([[-1.0, 0.0]]), h0=np.zeros(1), Ht=H,
            Lt=np.zeros((7, 0)), Et=E, Gt=G, m0=m0.astype(float), Mt=np.zeros((7, n_u)),
            dt=np.zeros(1), ft=np.array([cfg.order_cost, 1.0])))
    if lifted:
        lo = np.ravel(np.column_stack([nom - dev, np.zeros(T)]))
        hi = np.ravel(np.column_stack([nom + dev, np.ones(T)]))
        D, e = [], []
        for t in range(T):
            r = np.zeros(2 * T)
            r[2 * t], r[2 * t + 1] = 1.0, -dev[t]
            D.append(r)
            e.append(nom[t])
            r = np.zeros(2 * T)
            r[2 * t], r[2 * t + 1] = -1.0, -dev[t]
            D.append(r)
            e.append(-nom[t])
        r = np.zeros(2 * T)
        r[1::2] = 1.0
        D.append(r)
        e.append(float(cfg.budget))
        observed = np.ravel(np.column_stack([np.ones(T, bool), np.zeros(T, bool)]))
        U = Polytope(np.array(D), np.array(e), lo, hi, observed)
    else:
        U = Polytope.box(nom - dev, nom + dev)
    meta = {"generator": "inventory", "seed": int(seed), "nominal": nom.tolist(),
            "dev": dev.tolist(), "config": {k: v for k, v in asdict(cfg).items()
                                            if not isinstance(v, np.ndarray)}}
    inst = Instance(T=T, n_x=0, c=np.zeros(0), s0=np.array([float(cfg.init_inventory)]),
                    x_bounds=XBounds(np.zeros(0), np.zeros(0)), stages=tuple(stages), U=U,
                    name=f"inventory-T{T}-seed{seed}", meta=meta)
    rep = validate(inst)
    if not rep.ok:
        from .model import InstanceValidationError

        raise InstanceValidationError(rep.findings)
    return inst


# ----------------------------------------------------------------------------
# batch study
# ----------------------------------------------------------------------------

STUDY_COLUMNS = ["seed", "T", "method", "UB", "LB", "gap", "iters", "time_ms"]


@dataclass
class StudyReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    solutions: dict = field(default_factory=dict, repr=False)

    def gaps(self, method):
        return np.array([r["gap"] for r in self.rows if r["method"] == method])

    def average_gap(self, method):
        g = self.gaps(method)
        return float(g.mean()) if g.size else np.nan

    def dominance_violations(self, tol=1e-6):
        """Instances where the two-stage rule's gap exceeds the affine baseline's."""
        by = {}
        for r in self.rows:
            by.setdefault((r["seed"], r["T"]), {})[r["method"]] = r["gap"]
        return [k for k, g in by.items() if "tpb" in g and "adr" in g and g["tpb"] > g["adr"] + tol]

    def to_csv(self, fh=None, deterministic=False):
        out = fh or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(STUDY_COLUMNS)
        for r in self.rows:
            w.writerow([r["seed"], r["T"], r["method"], f"{r['UB']:.10g}", f"{r['LB']:.10g}",
                        f"{r['gap']:.10g}", r["iters"],
                        0 if deterministic else f"{r['time_ms']:.1f}"])
        return out.getvalue() if fh is None else None


def study(cfgs, seeds, methods=("tpb", "adr"), bundle_config=None, scenario_cap=64):
    """Per-instance upper bounds of each method against one shared lower bound.

    The lower bound comes from the scenario-tree LP over the worst cases
    harvested by the two-stage run, so it is valid for both methods.
    """
    from .bundle import BundleConfig, run
    from .lowerbound import harvest_scenarios, optimality_gap, scenario_lower_bound
    from .transform import build_two_stage, solve_adr

    bundle_config = bundle_config or BundleConfig()
    if isinstance(cfgs, InventoryConfig):
        cfgs = [cfgs]
    rep = StudyReport()
    for cfg in cfgs:
        for seed in seeds:
            try:
                inst = generate(cfg, seed)
                ts = build_two_stage(inst, box=bundle_config.trust_box)
                res = {}
                t0 = time.perf_counter()
                sol = run(ts, bundle_config)
                res["tpb"] = (sol.UB, sol.iterations, 1e3 * (time.perf_counter() - t0))
                S = harvest_scenarios(sol.log, inst.U, cap=scenario_cap)
                lb = scenario_lower_bound(inst, S, cap=scenario_cap)
                if "adr" in methods:
                    t0 = time.perf_counter()
                    adr = solve_adr(inst, box=bundle_config.trust_box)
                    if adr.status != "optimal":
                        raise RuntimeError(f"affine baseline {adr.status}")
                    res["adr"] = (adr.value, 1, 1e3 * (time.perf_counter() - t0))
                rep.solutions[(seed, cfg.T)] = sol
                for mth in methods:
                    ub, iters, ms = res[mth]
                    rep.rows.append({"seed": seed, "T": cfg.T, "method": mth, "UB": ub,
                                     "LB": lb.value, "gap": optimality_gap(ub, lb.value),
                                     "iters": iters, "time_ms": ms})
            except Exception as exc:  # a failed instance is reported, not fatal
                log.warning("instance T=%d seed=%d failed: %s", cfg.T, seed, exc)
                rep.failures.append({"seed": seed, "T": cfg.T, "error": repr(exc)})
    return rep


def default_config(T=5, **kw):
    cfg = InventoryConfig(T=T, budget=kw.pop("budget", 0.5 * T))
    return replace(cfg, **kw)
