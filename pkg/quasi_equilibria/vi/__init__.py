from .sets import BoxSet, BudgetSet, FeasibleSetSpec, project, project_onto_budget
from .solver import (
    SolutionCache,
    SolutionSet,
    VIConfig,
    enumerate_solutions,
    membership,
    natural_map_residual,
    solve_vi_from,
)

__all__ = [
    "BoxSet",
    "BudgetSet",
    "FeasibleSetSpec",
    "SolutionCache",
    "SolutionSet",
    "VIConfig",
    "enumerate_solutions",
    "membership",
    "natural_map_residual",
    "project",
    "project_onto_budget",
    "solve_vi_from",
]
