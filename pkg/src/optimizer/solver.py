"""Projected gradient descent with Barzilai–Borwein steps for FTH problems."""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from src.config import OptimizerSettings, settings
from src.core.trajectories import ControlSignal, StatePath, TimeGrid
from src.errors import BlowUpError, ContractViolationError
from src.models import StopReason
from src.optimizer.barzilai_borwein import BBState, bb_step, project_box, weighted_norm
from src.optimizer.callbacks import OcpCallbacks
from src.optimizer.line_search import NonMonotoneLineSearch
from src.schemas import CostBreakdown, TraceRow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveResult:
    control: ControlSignal
    state: StatePath
    cost: CostBreakdown
    iterations: int
    final_projected_gradient_norm: float
    converged: bool
    stop_reason: StopReason
    trace: List[TraceRow] = field(default_factory=list)


def projected_residual(values: np.ndarray, gradient: np.ndarray, bound: Optional[float]) -> np.ndarray:
    """u − P(u − g); equals the gradient when there is no box."""
    return values - project_box(values - gradient, bound)


def _evaluate(callbacks: OcpCallbacks, z, grid: TimeGrid, values: np.ndarray, bound):
    u = ControlSignal(grid, values, bound)
    y = callbacks.forward_solve(z, u)
    return u, y, callbacks.cost_eval(y, u)


def solve_fth(
    callbacks: OcpCallbacks,
    z: np.ndarray,
    grid: TimeGrid,
    box_bound: Optional[float] = None,
    u0: Optional[Union[ControlSignal, np.ndarray]] = None,
    options: Optional[OptimizerSettings] = None,
    tolerance: Optional[float] = None,
    label: str = "fth",
) -> SolveResult:
    opts = options or settings.optimizer
    tol = opts.gradient_tol if tolerance is None else tolerance
    weights = grid.weights

    if u0 is None:
        values = np.zeros((grid.n_nodes, callbacks.channels))
    else:
        values = np.array(u0.values if isinstance(u0, ControlSignal) else u0, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
    if values.shape != (grid.n_nodes, callbacks.channels):
        raise ContractViolationError(
            f"initial control shape {values.shape} does not match "
            f"({grid.n_nodes}, {callbacks.channels})"
        )
    if box_bound is not None and np.max(np.abs(values), initial=0.0) > box_bound:
        raise ContractViolationError(f"initial control violates the box bound {box_bound}")

    try:
        u, y, cost = _evaluate(callbacks, z, grid, values, box_bound)
    except BlowUpError as e:
        raise BlowUpError(
            f"[{label}] forward solve blew up under the initial control, "
            f"choose a different initial guess",
            time=e.time,
            node=e.node,
        ) from e

    gradient = callbacks.gradient_assemble(y, callbacks.adjoint_solve(y, u), u)
    residual = weighted_norm(projected_residual(values, gradient, box_bound), weights)

    search = NonMonotoneLineSearch(opts.memory, opts.max_halvings, name=label)
    search.reset(cost.total)
    state = BBState(
        iter=0,
        prev_control=values,
        prev_gradient=gradient,
        step=opts.initial_step,
        step_bounds=(opts.step_min, opts.step_max),
        weights=weights,
    )
    trace = [TraceRow(iter=0, cost=cost.total, grad_norm=residual, step=state.step)]
    stop_reason = StopReason.ITERATION_CAP
    iterations = 0

    while iterations < opts.max_iterations:
        if residual <= tol:
            stop_reason = StopReason.GRADIENT_TOLERANCE
            break

        step = state.step
        accepted = None
        for _ in range(opts.max_halvings + 1):
            trial = project_box(values - step * gradient, box_bound)
            try:
                candidate = _evaluate(callbacks, z, grid, trial, box_bound)
            except BlowUpError:
                candidate = None
            if candidate is not None and search.accepts(candidate[2].total):
                accepted = (trial, candidate)
                break
            search.on_halving()
            step *= 0.5
        if accepted is None:
            step = opts.step_min
            search.on_fallback(step)
            trial = project_box(values - step * gradient, box_bound)
            try:
                accepted = (trial, _evaluate(callbacks, z, grid, trial, box_bound))
            except BlowUpError as e:
                logger.warning(
                    f"[{label}] forward solve blew up at the minimal step (t={e.time:.6g}), "
                    f"keeping iterate {iterations}"
                )
                stop_reason = StopReason.STEP_BLOWUP
                break

        previous_cost = cost.total
        values, (u, y, cost) = accepted
        search.record(cost.total)
        gradient = callbacks.gradient_assemble(y, callbacks.adjoint_solve(y, u), u)
        residual = weighted_norm(projected_residual(values, gradient, box_bound), weights)
        state, _ = bb_step(state, values, gradient)
        iterations += 1
        trace.append(TraceRow(iter=iterations, cost=cost.total, grad_norm=residual, step=step))

        if iterations % opts.log_every == 0:
            logger.debug(
                f"[{label}] iter={iterations} cost={cost.total:.12g} "
                f"residual={residual:.3e} step={step:.3e}"
            )

        if residual <= tol:
            stop_reason = StopReason.GRADIENT_TOLERANCE
            break
        change = abs(cost.total - previous_cost)
        if step > opts.step_min and change <= opts.relative_cost_change * max(abs(previous_cost), 1e-300):
            stop_reason = StopReason.STAGNATION
            break

    converged = residual <= tol
    log = logger.info if converged or stop_reason is StopReason.STAGNATION else logger.warning
    log(
        f"[{label}] stopped after {iterations} iterations ({stop_reason.value}): "
        f"cost={cost.total:.12g} residual={residual:.3e} "
        f"halvings={search.halvings} fallbacks={search.fallbacks}"
    )
    return SolveResult(
        control=u,
        state=y,
        cost=cost,
        iterations=iterations,
        final_projected_gradient_norm=residual,
        converged=converged,
        stop_reason=stop_reason,
        trace=trace,
    )


def finite_difference_gradient(
    callbacks: OcpCallbacks,
    z: np.ndarray,
    grid: TimeGrid,
    u: ControlSignal,
    h: float,
    entries: Optional[Iterable[Tuple[int, int]]] = None,
) -> np.ndarray:
    """Central differences of the discrete cost, scaled to the L² Riesz gradient.

    Each difference quotient is divided by the quadrature weight of its node
    so the result is comparable with ``gradient_assemble``. Entries outside
    ``entries`` are NaN. The box is ignored for the perturbed controls.
    """
    if h <= 0:
        raise ContractViolationError("finite-difference step must be positive")
    base = np.array(u.values, dtype=float)
    weights = grid.weights
    if entries is None:
        entries = [(k, j) for k in range(base.shape[0]) for j in range(base.shape[1])]

    result = np.full(base.shape, math.nan)
    for k, j in entries:
        plus = base.copy()
        plus[k, j] += h
        minus = base.copy()
        minus[k, j] -= h
        j_plus = callbacks.reduced_cost(z, ControlSignal(grid, plus))
        j_minus = callbacks.reduced_cost(z, ControlSignal(grid, minus))
        result[k, j] = (j_plus - j_minus) / (2.0 * h * weights[k])
    return result
