"""Mixed-binary linear programs (minimisation).

Two backends: HiGHS through :func:`scipy.optimize.milp`, and a native
best-bound branch-and-bound over :func:`solve_lp`.
"""

from __future__ import annotations

import heapq
import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .lp import LinearProgram, SolverError, solve_lp

INT_TOL = 1e-6
MIP_FEAS_TOL = 1e-9


class NodeLimitError(SolverError):
    """Search stopped at the node limit; carries the incumbent and residual gap."""

    def __init__(self, solution):
        super().__init__(f"node limit reached with relative gap {solution.gap:.3g}")
        self.solution = solution


@dataclass
class MixedIntegerProgram:
    lp: LinearProgram
    binaries: np.ndarray

    def __post_init__(self):
        self.binaries = np.asarray(self.binaries, dtype=int).reshape(-1)
        if self.binaries.size and (self.binaries.min() < 0 or self.binaries.max() >= self.lp.n):
            raise ValueError("binary index out of range")
        self.lp.lo[self.binaries] = np.maximum(self.lp.lo[self.binaries], 0.0)
        self.lp.hi[self.binaries] = np.minimum(self.lp.hi[self.binaries], 1.0)


@dataclass
class MipSolution:
    status: str
    x: np.ndarray | None = None
    fun: float = np.nan
    bound: float = np.nan
    gap: float = np.nan
    nodes: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == "optimal"


def relative_gap(incumbent, bound):
    if not np.isfinite(incumbent):
        return np.inf
    return abs(incumbent - bound) / max(1.0, abs(incumbent))


def solve_milp(mip, gap_tol=1e-6, backend="highs", node_limit=None, feas_tol=MIP_FEAS_TOL):
    if backend == "highs":
        return _solve_highs(mip, gap_tol, node_limit, feas_tol)
    if backend == "bnb":
        return BranchAndBound(mip, gap_tol=gap_tol, node_limit=node_limit).solve()
    raise ValueError(f"unknown MILP backend {backend!r}")


def _solve_highs(mip, gap_tol, node_limit, feas_tol=MIP_FEAS_TOL):
    lp = mip.lp
    cons = []
    if lp.A_eq.shape[0]:
        cons.append(LinearConstraint(lp.A_eq, lp.b_eq, lp.b_eq))
    if lp.A_ge.shape[0]:
        cons.append(LinearConstraint(lp.A_ge, lp.b_ge, np.inf))
    integrality = np.zeros(lp.n)
    integrality[mip.binaries] = 1
    options = {"mip_rel_gap": gap_tol, "presolve": True,
               # passed through to HiGHS; tight integrality limits big-M leakage
               "mip_feasibility_tolerance": feas_tol,
               "primal_feasibility_tolerance": min(1e-7, max(feas_tol, 1e-9))}
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Unrecognized options")
        res = milp(lp.c, constraints=cons, integrality=integrality,
                   bounds=Bounds(lp.lo, lp.hi), options=options)
    if res.status == 2:
        return MipSolution("infeasible")
    if res.status == 3:
        return MipSolution("unbounded")
    if res.x is None:
        raise SolverError(f"HiGHS MILP failed: {res.message}")
    x = np.asarray(res.x)
    x[mip.binaries] = np.round(x[mip.binaries])
    bound = getattr(res, "mip_dual_bound", None)
    if bound is None:  # no binaries: HiGHS solved a plain LP
        bound = res.fun
    sol = MipSolution("optimal" if res.status == 0 else "node_limit", x=x, fun=float(res.fun),
                      bound=float(bound), gap=float(getattr(res, "mip_gap", 0.0) or 0.0),
                      nodes=int(getattr(res, "mip_node_count", 0) or 0))
    if res.status != 0:
        raise NodeLimitError(sol)
    return sol


class BranchAndBound:
    """Best-bound search, branching on the most fractional binary.

    Ties in the fractionality score go to the lowest variable index.
    Node order is fully determined by (bound, creation counter).
    """

    def __init__(self, mip, gap_tol=1e-6, node_limit=None, lp_backend="highs"):
        self.mip = mip
        self.gap_tol = gap_tol
        self.node_limit = node_limit if node_limit is not None else 200000
        self.max_depth = 10 * max(1, mip.binaries.size)
        self.lp_backend = lp_backend

    def _relax(self, lo, hi):
        base = self.mip.lp
        lp = LinearProgram(c=base.c, A_eq=base.A_eq, b_eq=base.b_eq, A_ge=base.A_ge,
                           b_ge=base.b_ge, lo=lo, hi=hi)
        return solve_lp(lp, backend=self.lp_backend)

    def solve(self):
        base = self.mip.lp
        bins = self.mip.binaries
        counter = itertools.count()
        root = self._relax(base.lo.copy(), base.hi.copy())
        if root.status == "infeasible":
            return MipSolution("infeasible", nodes=1)
        if root.status == "unbounded":
            return MipSolution("unbounded", nodes=1)
        heap = [(root.fun, next(counter), 0, base.lo.copy(), base.hi.copy(), root)]
        best_x, best_val = None, np.inf
        nodes = 0
        while heap:
            bound = heap[0][0]
            if best_x is not None and relative_gap(best_val, bound) <= self.gap_tol:
                break
            if nodes >= self.node_limit:
                sol = MipSolution("node_limit", x=best_x, fun=best_val, bound=bound,
                                  gap=relative_gap(best_val, bound), nodes=nodes)
                raise NodeLimitError(sol)
            val, _, depth, lo, hi, rel = heapq.heappop(heap)
            nodes += 1
            if val >= best_val - 1e-12:
                continue
            xb = rel.x[bins]
            frac = np.abs(xb - np.round(xb))
            if bins.size == 0 or frac.max() <= INT_TOL:
                x = rel.x.copy()
                x[bins] = np.round(x[bins])
                best_x, best_val = x, val
                continue
            if depth >= self.max_depth:
                continue
            score = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
            j = bins[int(np.argmax(score))]  # argmax returns the first maximum
            for fix in (0.0, 1.0):
                clo, chi = lo.copy(), hi.copy()
                clo[j] = chi[j] = fix
                child = self._relax(clo, chi)
                if child.status == "optimal" and child.fun < best_val - 1e-12:
                    heapq.heappush(heap, (child.fun, next(counter), depth + 1, clo, chi, child))
                elif child.status == "unbounded":
                    return MipSolution("unbounded", nodes=nodes)
        if best_x is None:
            return MipSolution("infeasible", nodes=nodes)
        bound = heap[0][0] if heap else best_val
        bound = min(bound, best_val)
        return MipSolution("optimal", x=best_x, fun=float(best_val), bound=float(bound),
                           gap=relative_gap(best_val, bound), nodes=nodes)
