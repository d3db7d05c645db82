from src.problems.periodic_lqr import PeriodicLQ, counterexample_costs, solve_periodic_riccati
from src.problems.scalar import ScalarProblem, fth_value, ith_value

__all__ = [
    "PeriodicLQ",
    "ScalarProblem",
    "counterexample_costs",
    "fth_value",
    "ith_value",
    "solve_periodic_riccati",
]
