"""LP, convex QP and mixed-binary LP kernels."""

from .lp import (LinearProgram, LpSolution, RevisedSimplex, SolverError, lp_kkt_residuals,
                 solve_lp)
from .milp import (BranchAndBound, MipSolution, MixedIntegerProgram, NodeLimitError,
                   relative_gap, solve_milp)
from .qp import QpSolution, QuadraticProgram, qp_kkt_residuals, solve_qp

__all__ = [
    "LinearProgram", "LpSolution", "RevisedSimplex", "SolverError", "lp_kkt_residuals",
    "solve_lp", "BranchAndBound", "MipSolution", "MixedIntegerProgram", "NodeLimitError",
    "relative_gap", "solve_milp", "QpSolution", "QuadraticProgram", "qp_kkt_residuals",
    "solve_qp",
]
