from src.core.quadrature import assemble_cost, restriction_error, trapezoid_l2_sq
from src.core.trajectories import ControlSignal, RiccatiPath, StatePath, TimeGrid, check_finite

__all__ = [
    "ControlSignal",
    "RiccatiPath",
    "StatePath",
    "TimeGrid",
    "assemble_cost",
    "check_finite",
    "restriction_error",
    "trapezoid_l2_sq",
]
