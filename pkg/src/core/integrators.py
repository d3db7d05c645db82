"""Classical RK4 for free and controlled ODEs, plus the exact discrete adjoint.

Controls are nodal; inside a step the midpoint stages use the average of
the two nodal values, so the scheme is a map of (y_k, u_k, u_{k+1}).
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from src.core.trajectories import TimeGrid
from src.errors import BlowUpError

Rhs = Callable[[float, np.ndarray], np.ndarray]


def _guard(value: np.ndarray, grid: TimeGrid, node: int, threshold: float) -> None:
    if not np.all(np.isfinite(value)) or np.max(np.abs(value)) > threshold:
        raise BlowUpError("integration blew up", time=grid.node(node), node=node)


def rk4_solve(
    rhs: Rhs,
    initial: np.ndarray,
    grid: TimeGrid,
    backward: bool = False,
    post_step: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    threshold: float = math.inf,
) -> np.ndarray:
    """Integrate ``x' = rhs(t, x)`` over the grid.

    With ``backward=True`` the initial value is taken at ``t_end``. The
    returned array is indexed by node either way.
    """
    initial = np.asarray(initial, dtype=float)
    out = np.empty((grid.n_nodes,) + initial.shape)
    n = grid.n_steps
    h = -grid.dt if backward else grid.dt
    order = range(n, 0, -1) if backward else range(n)
    k0 = n if backward else 0
    out[k0] = initial
    x = initial
    for k in order:
        t = grid.node(k)
        k1 = rhs(t, x)
        k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = rhs(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if post_step is not None:
            x = post_step(x)
        target = k - 1 if backward else k + 1
        _guard(x, grid, target, threshold)
        out[target] = x
    return out


@dataclass(frozen=True)
class ControlledOdeSystem:
    """y' = drift(t, y) + input_matrix · u."""

    input_matrix: np.ndarray
    drift: Rhs
    drift_jacobian: Callable[[float, np.ndarray], np.ndarray]
    blowup_threshold: float = 1e8

    @property
    def dim(self) -> int:
        return self.input_matrix.shape[0]

    def _stages(self, t: float, h: float, y: np.ndarray, bu0, bu_mid, bu1):
        k1 = self.drift(t, y) + bu0
        y2 = y + 0.5 * h * k1
        k2 = self.drift(t + 0.5 * h, y2) + bu_mid
        y3 = y + 0.5 * h * k2
        k3 = self.drift(t + 0.5 * h, y3) + bu_mid
        y4 = y + h * k3
        k4 = self.drift(t + h, y4) + bu1
        return (y, y2, y3, y4), (k1, k2, k3, k4)


def rk4_forward(
    system: ControlledOdeSystem, z: np.ndarray, grid: TimeGrid, controls: np.ndarray
) -> np.ndarray:
    h = grid.dt
    bu = np.asarray(controls, dtype=float) @ system.input_matrix.T
    states = np.empty((grid.n_nodes, system.dim))
    y = np.asarray(z, dtype=float).reshape(system.dim)
    states[0] = y
    for k in range(grid.n_steps):
        mid = 0.5 * (bu[k] + bu[k + 1])
        with np.errstate(over="ignore", invalid="ignore"):
            _, (k1, k2, k3, k4) = system._stages(grid.node(k), h, y, bu[k], mid, bu[k + 1])
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _guard(y, grid, k + 1, system.blowup_threshold)
        states[k + 1] = y
    return states


def rk4_adjoint(
    system: ControlledOdeSystem,
    grid: TimeGrid,
    states: np.ndarray,
    controls: np.ndarray,
    running_grad: np.ndarray,
    terminal_grad: np.ndarray,
) -> np.ndarray:
    """Nodal adjoint p with dJ/du_k = dt·w_k (u_k + Bᵀ p_k).

    ``running_grad`` holds ∂(½q)/∂y at every node and ``terminal_grad`` the
    gradient of the terminal term. The sweep is the reverse-mode derivative
    of ``rk4_forward`` and of the trapezoid cost, so the reduced gradient
    is exact for the discrete problem.
    """
    h = grid.dt
    weights = grid.weights
    B = system.input_matrix
    bu = np.asarray(controls, dtype=float) @ B.T
    sens = np.zeros((grid.n_nodes, system.dim))

    lam = weights[-1] * running_grad[-1] + np.asarray(terminal_grad, dtype=float)
    for k in range(grid.n_steps - 1, -1, -1):
        t = grid.node(k)
        mid = 0.5 * (bu[k] + bu[k + 1])
        (y1, y2, y3, y4), _ = system._stages(t, h, states[k], bu[k], mid, bu[k + 1])

        bk4 = (h / 6.0) * lam
        bk3 = (h / 3.0) * lam
        bk2 = (h / 3.0) * lam
        bk1 = (h / 6.0) * lam
        by = lam.copy()

        by4 = system.drift_jacobian(t + h, y4).T @ bk4
        by += by4
        bk3 = bk3 + h * by4
        by3 = system.drift_jacobian(t + 0.5 * h, y3).T @ bk3
        by += by3
        bk2 = bk2 + 0.5 * h * by3
        by2 = system.drift_jacobian(t + 0.5 * h, y2).T @ bk2
        by += by2
        bk1 = bk1 + 0.5 * h * by2
        by += system.drift_jacobian(t, y1).T @ bk1

        s_mid = bk2 + bk3
        sens[k] += bk1 + 0.5 * s_mid
        sens[k + 1] += bk4 + 0.5 * s_mid

        lam = by + weights[k] * running_grad[k]
    return sens / weights[:, None]
