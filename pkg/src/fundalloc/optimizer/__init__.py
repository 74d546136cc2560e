from .exact import allocate_exact_bruteforce, allocate_exact_flow
from .feasibility import ResidualFeasibility, is_instance_feasible
from .heuristic import (
    ConsumptionRates,
    HeuristicScores,
    SolverStats,
    allocate_ha,
    consumption_rates,
    heuristic_scores,
    heuristic_scores_top3,
)
from .manual import allocate_manual, default_priority

__all__ = [
    "ConsumptionRates",
    "HeuristicScores",
    "ResidualFeasibility",
    "SolverStats",
    "allocate_exact_bruteforce",
    "allocate_exact_flow",
    "allocate_ha",
    "allocate_manual",
    "consumption_rates",
    "default_priority",
    "heuristic_scores",
    "heuristic_scores_top3",
    "is_instance_feasible",
]
from .solvers import SOLVERS, AllocationSolver, solve

__all__ += ["SOLVERS", "AllocationSolver", "solve"]
