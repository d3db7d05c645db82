import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from src.core.trajectories import ControlSignal, StatePath, TimeGrid
from src.errors import ContractViolationError, DomainError
from src.schemas import CostBreakdown

Path = Union[StatePath, ControlSignal]

_EDGE = 1e-12


def trapezoid_l2_sq(values: np.ndarray, grid: TimeGrid) -> float:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.shape[0] != grid.n_nodes:
        raise ContractViolationError(
            f"expected {grid.n_nodes} nodal values, got shape {values.shape}"
        )
    return float(trapezoid(values, dx=grid.dt))


def assemble_cost(
    state_pen: np.ndarray,
    ctrl_pen: np.ndarray,
    terminal: float,
    grid: TimeGrid,
) -> CostBreakdown:
    state_term = 0.5 * trapezoid_l2_sq(state_pen, grid)
    control_term = 0.5 * trapezoid_l2_sq(ctrl_pen, grid)
    terminal_term = 0.5 * float(terminal)
    return CostBreakdown(
        state_term=state_term,
        control_term=control_term,
        terminal_term=terminal_term,
        total=state_term + control_term + terminal_term,
    )


def window_nodes(a: TimeGrid, b: TimeGrid, window: Tuple[float, float]) -> np.ndarray:
    """Nodes of the finer grid inside the window, plus both window ends."""
    s, r = window
    for grid in (a, b):
        if s < grid.t_start - _EDGE or r > grid.t_end + _EDGE:
            raise DomainError(
                f"window ({s}, {r}) is outside the grid [{grid.t_start}, {grid.t_end}]"
            )
    fine = a if a.dt <= b.dt else b
    nodes = fine.nodes
    scale = _EDGE * max(1.0, abs(r))
    inner = nodes[(nodes > s + scale) & (nodes < r - scale)]
    return np.concatenate(([s], inner, [r]))


def resample(path: Path, times: np.ndarray) -> np.ndarray:
    grid_nodes = path.grid.nodes
    return np.column_stack(
        [np.interp(times, grid_nodes, path.values[:, j]) for j in range(path.values.shape[1])]
    )


def restriction_error(
    a: Path,
    b: Path,
    window: Tuple[float, float],
    weight_matrix: Optional[np.ndarray] = None,
) -> float:
    """L²((s, r)) norm of a − b after resampling onto common nodes.

    Channels are summed; ``weight_matrix`` replaces the Euclidean norm per
    node (the FEM mass matrix for H-valued states).
    """
    if type(a) is not type(b):
        raise ContractViolationError("restriction_error compares paths of the same kind")
    if a.values.shape[1] != b.values.shape[1]:
        raise ContractViolationError("paths have different channel counts")

    times = window_nodes(a.grid, b.grid, window)
    diff = resample(a, times) - resample(b, times)
    if weight_matrix is None:
        pointwise = np.sum(diff * diff, axis=1)
    else:
        weighted = np.asarray(weight_matrix @ diff.T).T
        pointwise = np.einsum("ki,ki->k", diff, weighted)
    return math.sqrt(max(float(trapezoid(pointwise, times)), 0.0))
