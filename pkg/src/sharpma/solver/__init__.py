"""Discrete Aleksandrov solvers: a planar geometric backend and a wide-stencil grid backend."""

from .api import ComparisonReport, discrete_comparison_check, solve_dirichlet, solve_power_rhs
from .solution import DiscreteSolution
from .spec import BoundaryData, RhsSpec, SolverConfig

__all__ = [
    "BoundaryData",
    "ComparisonReport",
    "DiscreteSolution",
    "RhsSpec",
    "SolverConfig",
    "discrete_comparison_check",
    "solve_dirichlet",
    "solve_power_rhs",
]
