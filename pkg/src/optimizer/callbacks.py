from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.core.integrators import ControlledOdeSystem, rk4_adjoint, rk4_forward
from src.core.quadrature import assemble_cost
from src.core.trajectories import ControlSignal, StatePath
from src.schemas import CostBreakdown


@dataclass(frozen=True)
class OcpCallbacks:
    """The four solves a reduced-gradient method needs, plus the channel count."""

    forward_solve: Callable[[np.ndarray, ControlSignal], StatePath]
    adjoint_solve: Callable[[StatePath, ControlSignal], StatePath]
    gradient_assemble: Callable[[StatePath, StatePath, ControlSignal], np.ndarray]
    cost_eval: Callable[[StatePath, ControlSignal], CostBreakdown]
    channels: int

    def reduced_cost(self, z: np.ndarray, u: ControlSignal) -> float:
        return self.cost_eval(self.forward_solve(z, u), u).total

    def reduced_gradient(self, z: np.ndarray, u: ControlSignal) -> np.ndarray:
        y = self.forward_solve(z, u)
        return self.gradient_assemble(y, self.adjoint_solve(y, u), u)


def ode_callbacks(
    system: ControlledOdeSystem,
    running_penalty: Callable[[np.ndarray], np.ndarray],
    running_grad: Callable[[np.ndarray], np.ndarray],
    terminal_penalty: Callable[[np.ndarray], float],
    terminal_grad: Callable[[np.ndarray], np.ndarray],
) -> OcpCallbacks:
    """Callbacks for y' = f(t, y) + Bu with cost ½∫q(y) + |u|² + ½P(y(T)).

    ``running_penalty`` maps the state matrix to nodal q values,
    ``running_grad`` to nodal ∂(½q)/∂y; the terminal pair acts on y(T).
    """
    B = system.input_matrix

    def forward_solve(z, u: ControlSignal) -> StatePath:
        return StatePath(u.grid, rk4_forward(system, z, u.grid, u.values))

    def adjoint_solve(y: StatePath, u: ControlSignal) -> StatePath:
        p = rk4_adjoint(
            system,
            u.grid,
            y.values,
            u.values,
            running_grad(y.values),
            terminal_grad(y.final),
        )
        return StatePath(u.grid, p)

    def gradient_assemble(y: StatePath, p: StatePath, u: ControlSignal) -> np.ndarray:
        return u.values + p.values @ B

    def cost_eval(y: StatePath, u: ControlSignal) -> CostBreakdown:
        return assemble_cost(
            running_penalty(y.values),
            np.sum(u.values * u.values, axis=1),
            terminal_penalty(y.final),
            y.grid,
        )

    return OcpCallbacks(
        forward_solve=forward_solve,
        adjoint_solve=adjoint_solve,
        gradient_assemble=gradient_assemble,
        cost_eval=cost_eval,
        channels=B.shape[1],
    )
