from src.optimizer.barzilai_borwein import BBState, bb_step, project_box
from src.optimizer.callbacks import OcpCallbacks, ode_callbacks
from src.optimizer.solver import SolveResult, finite_difference_gradient, solve_fth

__all__ = [
    "BBState",
    "OcpCallbacks",
    "SolveResult",
    "bb_step",
    "finite_difference_gradient",
    "ode_callbacks",
    "project_box",
    "solve_fth",
]
