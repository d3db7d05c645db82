"""Crank–Nicolson / Adams–Bashforth stepping for the Schlögl model and its discrete adjoint.

Semi-discrete system M y' = −νK y + M_L g(y) + L u. Diffusion is treated
by Crank–Nicolson, reaction and control by two-step Adams–Bashforth; the
first step is semi-implicit Euler (implicit diffusion, explicit rest).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from src.core.quadrature import assemble_cost
from src.core.trajectories import ControlSignal, StatePath, TimeGrid
from src.errors import BlowUpError, ContractViolationError
from src.optimizer.callbacks import OcpCallbacks
from src.schemas import CostBreakdown
from src.schlogl.schlogl_mesh import FemMesh, projection_penalties
from src.schlogl.schlogl_problem import SchloglProblem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CnabOperators:
    dt: float
    explicit: sp.csr_matrix
    solve: Callable[[np.ndarray], np.ndarray]
    bootstrap_explicit: sp.csr_matrix
    bootstrap_solve: Callable[[np.ndarray], np.ndarray]


def cnab_operators(problem: SchloglProblem, mesh: FemMesh, dt: float) -> CnabOperators:
    M, K = mesh.mass_matrix, mesh.stiffness_matrix
    implicit = (M / dt + 0.5 * problem.nu * K).tocsc()
    bootstrap = (M / dt + problem.nu * K).tocsc()
    return CnabOperators(
        dt=dt,
        explicit=(M / dt - 0.5 * problem.nu * K).tocsr(),
        solve=factorized(implicit),
        bootstrap_explicit=(M / dt).tocsr(),
        bootstrap_solve=factorized(bootstrap),
    )


def _operators_for(problem, mesh, grid, operators: Optional[CnabOperators]) -> CnabOperators:
    if operators is None:
        return cnab_operators(problem, mesh, grid.dt)
    if abs(operators.dt - grid.dt) > 1e-14 * max(1.0, grid.dt):
        raise ContractViolationError("operators were factorized for a different time step")
    return operators


def cnab_forward(
    problem: SchloglProblem,
    mesh: FemMesh,
    grid: TimeGrid,
    u: ControlSignal,
    y0: Optional[np.ndarray] = None,
    operators: Optional[CnabOperators] = None,
) -> StatePath:
    if u.channels != problem.n_actuators:
        raise ContractViolationError(
            f"control has {u.channels} channels for {problem.n_actuators} actuators"
        )
    ops = _operators_for(problem, mesh, grid, operators)
    y = problem.initial_state(mesh.nodes) if y0 is None else np.asarray(y0, dtype=float)
    forcing = u.values @ mesh.actuator_loads.T

    states = np.empty((grid.n_nodes, mesh.n_nodes))
    states[0] = y
    previous = None
    for k in range(grid.n_steps):
        current = mesh.lumped_mass * problem.reaction(y) + forcing[k]
        if previous is None:
            y = ops.bootstrap_solve(ops.bootstrap_explicit @ y + current)
        else:
            y = ops.solve(ops.explicit @ y + 1.5 * current - 0.5 * previous)
        if not np.all(np.isfinite(y)):
            raise BlowUpError("Schlögl state became non-finite", time=grid.node(k + 1), node=k + 1)
        states[k + 1] = y
        previous = current
    return StatePath(grid, states)


def cnab_adjoint(
    problem: SchloglProblem,
    mesh: FemMesh,
    y: StatePath,
    operators: Optional[CnabOperators] = None,
) -> StatePath:
    """Nodal adjoint p with dJ/du_k = dt·w_k (u_k + Lᵀ p_k), exact for the scheme above."""
    grid = y.grid
    ops = _operators_for(problem, mesh, grid, operators)
    weights = grid.weights
    n = grid.n_steps
    M = mesh.mass_matrix

    coefficients = (M @ y.values.T).T @ mesh.modes
    source = (M @ (mesh.modes @ coefficients.T)).T
    source *= (problem.gamma * weights)[:, None]

    mu = np.zeros((n + 3, mesh.n_nodes))
    for j in range(n, 0, -1):
        slope = mesh.lumped_mass * problem.reaction_derivative(y.values[j])
        rhs = source[j] + ops.explicit @ mu[j + 1] + slope * (1.5 * mu[j + 1] - 0.5 * mu[j + 2])
        mu[j] = ops.bootstrap_solve(rhs) if j == 1 else ops.solve(rhs)

    leading = np.full(n + 1, 1.5)
    leading[0] = 1.0
    sensitivity = leading[:, None] * mu[1 : n + 2] - 0.5 * mu[2 : n + 3]
    return StatePath(grid, sensitivity / weights[:, None])


def schlogl_cost(problem: SchloglProblem, mesh: FemMesh, y: StatePath, u: ControlSignal) -> CostBreakdown:
    return assemble_cost(
        problem.gamma * projection_penalties(mesh, y.values),
        np.sum(u.values * u.values, axis=1),
        0.0,
        y.grid,
    )


def schlogl_callbacks(problem: SchloglProblem, mesh: FemMesh, grid: TimeGrid) -> OcpCallbacks:
    ops = cnab_operators(problem, mesh, grid.dt)
    loads = mesh.actuator_loads

    def forward_solve(z, u: ControlSignal) -> StatePath:
        return cnab_forward(problem, mesh, u.grid, u, y0=z, operators=ops)

    def adjoint_solve(y: StatePath, u: ControlSignal) -> StatePath:
        return cnab_adjoint(problem, mesh, y, operators=ops)

    def gradient_assemble(y: StatePath, p: StatePath, u: ControlSignal) -> np.ndarray:
        return u.values + p.values @ loads

    def cost_eval(y: StatePath, u: ControlSignal) -> CostBreakdown:
        return schlogl_cost(problem, mesh, y, u)

    return OcpCallbacks(
        forward_solve=forward_solve,
        adjoint_solve=adjoint_solve,
        gradient_assemble=gradient_assemble,
        cost_eval=cost_eval,
        channels=problem.n_actuators,
    )


def free_dynamics(
    problem: SchloglProblem,
    mesh: FemMesh,
    horizon: float,
    dt: float,
    y0: Optional[np.ndarray] = None,
) -> StatePath:
    grid = TimeGrid(0.0, horizon, max(2, int(round(horizon / dt))))
    u = ControlSignal.zeros(grid, problem.n_actuators)
    return cnab_forward(problem, mesh, grid, u, y0=y0)
