"""Time-periodic 2×2 LQ problem y' = φ(t)A y + B u, φ(t) = 1 + |cos πt|.

Cost ½∫|y|² + |u|² + ½χ|y(T)|². Also hosts the uncoupled system whose FTH
costs diverge from the (vanishing) ITH cost.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from src.config import settings
from src.core.integrators import ControlledOdeSystem, rk4_forward, rk4_solve
from src.core.quadrature import assemble_cost
from src.core.trajectories import ControlSignal, RiccatiPath, StatePath, TimeGrid
from src.errors import ContractViolationError, ConvergenceError
from src.optimizer.callbacks import OcpCallbacks, ode_callbacks
from src.schemas import CostBreakdown

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
IDENTITY = np.eye(2)


def phi(t: float) -> float:
    return 1.0 + abs(math.cos(math.pi * t))


def phi_integral(t: float) -> float:
    """∫_0^t φ, using that ∫|cos πτ| over one period equals 2/π."""
    whole = math.floor(t)
    frac = t - whole
    if frac <= 0.5:
        partial = math.sin(math.pi * frac) / math.pi
    else:
        partial = (2.0 - math.sin(math.pi * frac)) / math.pi
    return t + whole * 2.0 / math.pi + partial


@dataclass(frozen=True)
class PeriodicLQ:
    chi: float = 0.0
    z: Tuple[float, float] = (1.0, 0.0)
    A_base: np.ndarray = field(default_factory=lambda: np.array([[1.0, 1.0], [1.0, -3.0]]))
    B: np.ndarray = field(default_factory=lambda: np.array([[0.0], [1.0]]))
    period: float = 1.0

    def __post_init__(self):
        if self.chi < 0:
            raise ContractViolationError("terminal weight chi must be nonnegative")

    def A(self, t: float) -> np.ndarray:
        return phi(t) * self.A_base

    @property
    def initial_state(self) -> np.ndarray:
        return np.asarray(self.z, dtype=float)

    @property
    def BBt(self) -> np.ndarray:
        return self.B @ self.B.T


# -------------------
# Structure
# -------------------


@dataclass(frozen=True)
class ModalDecomposition:
    e_plus: np.ndarray
    e_minus: np.ndarray
    rates: Tuple[float, float] = (-1.0 + SQRT5, -1.0 - SQRT5)

    def alpha(self, t: float) -> Tuple[float, float]:
        f = phi(t)
        return f * self.rates[0], f * self.rates[1]

    def coordinates(self, z: np.ndarray) -> Tuple[float, float]:
        basis = np.column_stack([self.e_plus, self.e_minus])
        z_plus, z_minus = np.linalg.solve(basis, np.asarray(z, dtype=float))
        return float(z_plus), float(z_minus)

    def free_solution(self, z: np.ndarray, t: float) -> np.ndarray:
        """Closed-form uncontrolled state, exp(∫α_±) z_± e_±."""
        z_plus, z_minus = self.coordinates(z)
        integral = phi_integral(t)
        return (
            math.exp(self.rates[0] * integral) * z_plus * self.e_plus
            + math.exp(self.rates[1] * integral) * z_minus * self.e_minus
        )


def modal_decomposition(lq: PeriodicLQ) -> ModalDecomposition:
    return ModalDecomposition(
        e_plus=np.array([1.0, -2.0 + SQRT5]),
        e_minus=np.array([1.0, -2.0 - SQRT5]),
    )


def kalman_matrix(lq: PeriodicLQ, t: float, input_matrix: Optional[np.ndarray] = None) -> np.ndarray:
    B = lq.B if input_matrix is None else np.asarray(input_matrix, dtype=float).reshape(2, 1)
    return np.hstack([B, -lq.A(t) @ B])


def kalman_rank(lq: PeriodicLQ, t: float, input_matrix: Optional[np.ndarray] = None) -> bool:
    return abs(np.linalg.det(kalman_matrix(lq, t, input_matrix))) > 1e-12


def initial_norm_rate(lq: PeriodicLQ, u0: float) -> float:
    """d/dt |y|² at t = 0 for a control with value u0 there."""
    z = lq.initial_state
    return float(2.0 * z @ (lq.A(0.0) @ z + lq.B[:, 0] * u0))


# -------------------
# Riccati equations
# -------------------


def _symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def riccati_rhs(lq: PeriodicLQ) -> Callable[[float, np.ndarray], np.ndarray]:
    BBt = lq.BBt

    def rhs(t: float, P: np.ndarray) -> np.ndarray:
        A = lq.A(t)
        return -(A.T @ P + P @ A - P @ BBt @ P + IDENTITY)

    return rhs


def _check_psd(matrices: np.ndarray, label: str) -> None:
    lowest = float(np.min(np.linalg.eigvalsh(matrices)))
    if lowest < -1e-10:
        logger.warning(f"{label}: Riccati path lost semidefiniteness (min eigenvalue {lowest:.3e})")


def solve_differential_riccati(lq: PeriodicLQ, grid: TimeGrid) -> RiccatiPath:
    matrices = rk4_solve(
        riccati_rhs(lq), lq.chi * IDENTITY, grid, backward=True, post_step=_symmetrize
    )
    _check_psd(matrices, f"Π_T on [{grid.t_start}, {grid.t_end}]")
    return RiccatiPath(grid, matrices)


def solve_periodic_riccati(
    lq: PeriodicLQ,
    steps_per_period: Optional[int] = None,
    tol: Optional[float] = None,
    max_periods: Optional[int] = None,
) -> RiccatiPath:
    """Backward sweeps over successive periods from Π = 0 until they stop changing."""
    steps = steps_per_period or settings.lqr.steps_per_period
    tol = tol or settings.lqr.periodic_tol
    max_periods = max_periods or settings.lqr.max_periods
    if steps < 100:
        raise ContractViolationError("steps_per_period must be at least 100")

    grid = TimeGrid(0.0, lq.period, steps)
    rhs = riccati_rhs(lq)
    terminal = np.zeros((2, 2))
    previous = None
    for sweep in range(1, max_periods + 1):
        matrices = rk4_solve(rhs, terminal, grid, backward=True, post_step=_symmetrize)
        if previous is not None:
            change = float(np.max(np.linalg.norm(matrices - previous, axis=(1, 2))))
            if change <= tol:
                logger.info(f"Periodic Riccati converged after {sweep} periods (change {change:.2e})")
                _check_psd(matrices, "Π_∞")
                return RiccatiPath(grid, matrices, periodic=True)
        previous = matrices
        terminal = matrices[0]
    raise ConvergenceError(f"periodic Riccati did not converge within {max_periods} periods")


def riccati_residual(lq: PeriodicLQ, path: RiccatiPath) -> float:
    """Max Frobenius residual of Π' = F(t, Π) along the path.

    The central difference over [t_{k−1}, t_{k+1}] is compared with the
    Simpson mean of F over the same interval, so the two agree to fourth
    order in dt. Nodes where φ has a kink are skipped.
    """
    g = path.grid
    rhs = riccati_rhs(lq)
    slopes = np.stack([rhs(g.node(k), path.matrices[k]) for k in range(g.n_nodes)])
    worst = 0.0
    for k in range(1, g.n_steps):
        t = g.node(k)
        if abs(2.0 * t - round(2.0 * t)) < 1e-9 and round(2.0 * t) % 2 == 1:
            continue
        difference = (path.matrices[k + 1] - path.matrices[k - 1]) / (2.0 * g.dt)
        simpson = (slopes[k - 1] + 4.0 * slopes[k] + slopes[k + 1]) / 6.0
        worst = max(worst, float(np.linalg.norm(difference - simpson)))
    return worst


def riccati_value(path: RiccatiPath, z: np.ndarray, t: Optional[float] = None) -> float:
    t = path.grid.t_start if t is None else t
    z = np.asarray(z, dtype=float)
    return float(0.5 * z @ path.at(t) @ z)


def value_bound_constant(path: RiccatiPath) -> float:
    """C with 𝔙_s(z) ≤ ½C|z|² for every s."""
    return float(np.max(np.linalg.eigvalsh(path.matrices)))


def feedback_grid_for(grid: TimeGrid) -> TimeGrid:
    """Riccati grid on which the RK4 half-steps of ``grid`` are nodes."""
    return grid.refined(2)


# -------------------
# Closed loop
# -------------------


def closed_loop(
    lq: PeriodicLQ,
    pi: RiccatiPath,
    grid: TimeGrid,
    include_terminal: bool = True,
) -> Tuple[StatePath, ControlSignal, CostBreakdown]:
    """Feedback u = −BᵀΠy from z over ``grid``.

    The running cost is integrated alongside the state by the same RK4
    steps, so it carries the scheme's fourth-order accuracy.
    """
    if not pi.periodic and (
        grid.t_start < pi.grid.t_start - 1e-12 or grid.t_end > pi.grid.t_end + 1e-12
    ):
        raise ContractViolationError("Riccati path does not cover the simulation grid")
    BBt = lq.BBt
    Bt = lq.B.T

    def rhs(t: float, x: np.ndarray) -> np.ndarray:
        gain = pi.at(t)
        y = x[:2]
        u = -Bt @ gain @ y
        return np.concatenate(((lq.A(t) - BBt @ gain) @ y, [y @ y, u @ u]))

    augmented = rk4_solve(
        rhs,
        np.concatenate((lq.initial_state, [0.0, 0.0])),
        grid,
        threshold=settings.harness.blowup_threshold,
    )
    states = augmented[:, :2]
    gains = np.stack([Bt @ pi.at(t) for t in grid.nodes])
    controls = -np.einsum("kij,kj->ki", gains, states)

    state_term = 0.5 * float(augmented[-1, 2])
    control_term = 0.5 * float(augmented[-1, 3])
    terminal_term = 0.5 * lq.chi * float(states[-1] @ states[-1]) if include_terminal else 0.0
    cost = CostBreakdown(
        state_term=state_term,
        control_term=control_term,
        terminal_term=terminal_term,
        total=state_term + control_term + terminal_term,
    )
    return StatePath(grid, states), ControlSignal(grid, controls), cost


def monodromy(lq: PeriodicLQ, pi: RiccatiPath) -> np.ndarray:
    """Fundamental matrix of the Π_∞ closed loop over one period."""
    n = pi.grid.n_steps
    steps = n // 2 if n % 2 == 0 else n
    grid = TimeGrid(0.0, lq.period, steps)
    BBt = lq.BBt
    return rk4_solve(lambda t, X: (lq.A(t) - BBt @ pi.at(t)) @ X, IDENTITY, grid)[-1]


def spectral_radius(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def lqr_system(lq: PeriodicLQ) -> ControlledOdeSystem:
    return ControlledOdeSystem(
        input_matrix=lq.B,
        drift=lambda t, y: lq.A(t) @ y,
        drift_jacobian=lambda t, y: lq.A(t),
        blowup_threshold=settings.harness.blowup_threshold,
    )


def lqr_callbacks(lq: PeriodicLQ) -> OcpCallbacks:
    chi = lq.chi
    return ode_callbacks(
        lqr_system(lq),
        running_penalty=lambda Y: np.sum(Y * Y, axis=1),
        running_grad=lambda Y: Y,
        terminal_penalty=lambda y: chi * float(y @ y),
        terminal_grad=lambda y: chi * y,
    )


# -------------------
# Uncoupled counterexample
# -------------------


@dataclass(frozen=True)
class CounterexampleCosts:
    fth_cost: float
    fth_closed_form: float
    ith_cost: float

    @property
    def relative_error(self) -> float:
        if self.fth_closed_form == 0.0:
            return abs(self.fth_cost)
        return abs(self.fth_cost - self.fth_closed_form) / self.fth_closed_form


def counterexample_costs(y0: float, T: float, steps_per_unit: int = 1000) -> CounterexampleCosts:
    """y' = y, w' = w + u from (y0, 0), cost ½∫|w|² + |u|² + ½|(y, w)(T)|².

    The optimum keeps (w, u) = 0 while y grows freely, so the FTH cost is
    ½e^{2T}y0²; the ITH problem ignores y and costs nothing.
    """
    grid = TimeGrid.with_density(0.0, T, steps_per_unit)
    system = ControlledOdeSystem(
        input_matrix=np.array([[0.0], [1.0]]),
        drift=lambda t, x: x,
        drift_jacobian=lambda t, x: IDENTITY,
        blowup_threshold=math.inf,
    )
    controls = np.zeros((grid.n_nodes, 1))
    states = rk4_forward(system, np.array([y0, 0.0]), grid, controls)
    cost = assemble_cost(
        states[:, 1] ** 2, np.sum(controls * controls, axis=1), float(states[-1] @ states[-1]), grid
    )
    return CounterexampleCosts(
        fth_cost=cost.total,
        fth_closed_form=0.5 * math.exp(2.0 * T) * y0 * y0,
        ith_cost=0.0,
    )
