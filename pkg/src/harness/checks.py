import logging
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from src.config import Settings, settings as default_settings
from src.core.quadrature import assemble_cost
from src.core.trajectories import StatePath, TimeGrid
from src.errors import ContractViolationError, DomainError, UnsupportedFamilyError
from src.models import ProblemFamily, VerdictStatus
from src.optimizer.solver import solve_fth
from src.problems.periodic_lqr import (
    PeriodicLQ,
    closed_loop,
    counterexample_costs,
    feedback_grid_for,
    lqr_callbacks,
    riccati_value,
    solve_differential_riccati,
    solve_periodic_riccati,
)
from src.problems.scalar import ScalarProblem, ith_closed_loop, value_function
from src.schemas import (
    CounterexampleReport,
    CounterexampleRow,
    DppCheckResult,
    ExperimentReport,
    RouteComparison,
    TCircleSelection,
    Verdict,
)

logger = logging.getLogger(__name__)


# -------------------
# Dynamic programming identity
# -------------------


def dpp_check(
    family: ProblemFamily,
    z: Sequence[float],
    s: float,
    T: float,
    steps_per_unit: Optional[int] = None,
    config: Optional[Settings] = None,
) -> DppCheckResult:
    """|J_{(s,T)}(ITH pair) + 𝔙_T(y(T)) − 𝔙_s(z)| with exact value functions on both ends."""
    config = config or default_settings
    if T <= s:
        raise ContractViolationError(f"T={T} must exceed s={s}")
    z = np.atleast_1d(np.asarray(z, dtype=float))

    if family is ProblemFamily.SCALAR:
        if z.size != 1:
            raise ContractViolationError("the scalar family takes a single initial value")
        steps = steps_per_unit or config.scalar.dpp_steps_per_unit
        problem = ScalarProblem(n=config.scalar.n, y0=float(z[0]))
        grid = TimeGrid.with_density(s, T, steps)
        state, control = ith_closed_loop(problem, grid)
        n = problem.n
        cost = assemble_cost(
            state.values[:, 0] ** (4 * n - 2) / (2 * n - 1),
            control.values[:, 0] ** 2,
            0.0,
            grid,
        ).total
        value_start = float(value_function(problem, z[0]))
        value_end = float(value_function(problem, state.final[0]))
    elif family is ProblemFamily.PERIODIC_LQR:
        if z.size != 2:
            raise ContractViolationError("the LQ family takes a two-dimensional initial state")
        steps = steps_per_unit or config.lqr.steps_per_unit
        lq = PeriodicLQ(chi=0.0, z=(float(z[0]), float(z[1])))
        pi = solve_periodic_riccati(
            lq, 2 * steps, config.lqr.periodic_tol, config.lqr.max_periods
        )
        grid = TimeGrid.with_density(s, T, steps)
        state, _, breakdown = closed_loop(lq, pi, grid, include_terminal=False)
        cost = breakdown.total
        value_start = riccati_value(pi, z, s)
        value_end = riccati_value(pi, state.final, T)
    else:
        raise UnsupportedFamilyError(f"{family.value} has no ITH reference for the DPP identity")

    residual = abs(cost + value_end - value_start)
    logger.info(f"DPP check {family.value} on ({s:g}, {T:g}): residual {residual:.3e}")
    return DppCheckResult(
        family=family.value,
        s=s,
        horizon=T,
        steps_per_unit=steps,
        fth_cost=cost,
        value_start=value_start,
        value_end=value_end,
        residual=residual,
    )


# -------------------
# T° selector
# -------------------


def t_circle_selector(
    path: StatePath,
    penalty: np.ndarray,
    s: float,
    T: float,
    value_start: float,
    terminal_allowance: float = 0.0,
    cost: Optional[float] = None,
) -> TCircleSelection:
    """Latest time in [(s+T)/2, T] whose penalty ‖Q(y(t))‖² stays below Φ_T.

    Φ_T = 4/(T−s)·(𝔙_s(z) + ½D₁), with ``value_start`` = 𝔙_s(z) and
    ``terminal_allowance`` = D₁(𝔙_T(y_∞(T))), zero without a terminal
    penalty. ϑ is the minimum penalty over the half interval. ``cost`` is
    the FTH cost J (½∫_s^T penalty by default) and the margin
    2J − ((T−s)/2)ϑ is nonnegative whenever ϑ ≤ 4/(T−s)·J.
    """
    if value_start < 0 or terminal_allowance < 0:
        raise ContractViolationError("value and terminal allowance must be nonnegative")
    grid = path.grid
    penalty = np.asarray(penalty, dtype=float)
    if penalty.shape != (grid.n_nodes,):
        raise ContractViolationError(f"expected {grid.n_nodes} penalty values, got {penalty.shape}")
    if s < grid.t_start - 1e-12 or T > grid.t_end + 1e-12 or T <= s:
        raise DomainError(f"interval ({s}, {T}) is not covered by the path")

    nodes = grid.nodes
    midpoint = 0.5 * (s + T)
    inside = (nodes >= s - 1e-12) & (nodes <= T + 1e-12)
    times, values = nodes[inside], penalty[inside]
    if cost is None:
        cost = 0.5 * float(trapezoid(values, times))

    half_mask = times >= midpoint - 1e-12
    half_times, half_values = times[half_mask], values[half_mask]
    if half_times.size == 0 or abs(half_times[0] - midpoint) > 1e-12:
        half_times = np.concatenate(([midpoint], half_times))
        half_values = np.concatenate(([np.interp(midpoint, times, values)], half_values))

    theta = float(np.min(half_values))
    threshold = 4.0 / (T - s) * (value_start + 0.5 * terminal_allowance)
    admissible = np.flatnonzero(half_values <= threshold + 1e-15)
    k = int(admissible[-1]) if admissible.size else int(np.argmin(half_values))
    selection = TCircleSelection(
        t_circle=float(half_times[k]),
        theta=theta,
        threshold=threshold,
        cost=cost,
        margin=2.0 * cost - 0.5 * (T - s) * theta,
        value_start=value_start,
        terminal_allowance=terminal_allowance,
    )
    logger.info(
        f"T° on ({s:g}, {T:g}) = {selection.t_circle:.6g}: ϑ={theta:.4e}, Φ_T={threshold:.4e}, "
        f"margin {selection.margin:.4e}"
    )
    return selection


def t_circle_verdict(selection: TCircleSelection) -> Verdict:
    margin = min(selection.margin, selection.threshold - selection.theta)
    return Verdict(
        name="t_circle_bound",
        status=VerdictStatus.PASSED if selection.bound_holds else VerdictStatus.FAILED,
        margin=margin,
        detail=(
            f"T°={selection.t_circle:.6g}, ϑ={selection.theta:.4e} against Φ_T={selection.threshold:.4e}; "
            f"2J − ((T−s)/2)ϑ = {selection.margin:.4e}"
        ),
    )


# -------------------
# Uncoupled counterexample
# -------------------


def counterexample_report(
    y0: float,
    horizons: Sequence[float],
    steps_per_unit: int = 1000,
    rtol: Optional[float] = None,
) -> CounterexampleReport:
    rtol = default_settings.tolerances.counterexample_rtol if rtol is None else rtol
    rows = []
    for T in horizons:
        costs = counterexample_costs(y0, T, steps_per_unit)
        rows.append(
            CounterexampleRow(
                horizon=T,
                fth_cost=costs.fth_cost,
                fth_closed_form=costs.fth_closed_form,
                ith_cost=costs.ith_cost,
                relative_error=costs.relative_error,
            )
        )

    worst = max((r.relative_error for r in rows), default=0.0)
    verdicts = {
        "closed_form_agreement": Verdict(
            name="closed_form_agreement",
            status=VerdictStatus.PASSED if worst <= rtol else VerdictStatus.FAILED,
            margin=rtol - worst,
            detail=f"max relative error {worst:.3e}",
        )
    }
    if y0 == 0.0:
        verdicts["fth_ith_divergence"] = Verdict(
            name="fth_ith_divergence",
            status=VerdictStatus.SKIPPED,
            detail="zero initial state: every cost vanishes",
        )
    else:
        gaps = [r.fth_cost - r.ith_cost for r in rows]
        diverging = all(b > a for a, b in zip(gaps, gaps[1:])) and gaps[0] > 0
        verdicts["fth_ith_divergence"] = Verdict(
            name="fth_ith_divergence",
            status=VerdictStatus.PASSED if diverging else VerdictStatus.FAILED,
            margin=gaps[-1],
            detail="FTH − ITH: " + ", ".join(f"{g:.6g}" for g in gaps),
        )
    return CounterexampleReport(y0=y0, rows=rows, verdicts=verdicts)


# -------------------
# Terminal penalty and route comparisons
# -------------------


def terminal_penalty_effect(without: ExperimentReport, with_penalty: ExperimentReport) -> Verdict:
    """‖y(T)‖ with the terminal penalty never exceeds the norm without it."""
    pairs = []
    for h, a in zip(without.horizons, without.terminal_norms):
        if a is None or h not in with_penalty.horizons:
            continue
        b = with_penalty.terminal_norms[with_penalty.horizons.index(h)]
        if b is not None:
            pairs.append((h, a, b))
    if not pairs:
        return Verdict(
            name="terminal_penalty_effect", status=VerdictStatus.SKIPPED, detail="no common horizon"
        )
    margin = min(a - b for _, a, b in pairs)
    return Verdict(
        name="terminal_penalty_effect",
        status=VerdictStatus.PASSED if margin >= -1e-12 else VerdictStatus.FAILED,
        margin=margin,
        detail=", ".join(f"T={h:g}: {a:.4e} vs {b:.4e}" for h, a, b in pairs),
    )


def two_route_costs(
    lq: PeriodicLQ,
    T: float,
    steps_per_unit: Optional[int] = None,
    config: Optional[Settings] = None,
) -> RouteComparison:
    """Optimizer-route and Riccati-route optimal costs of the same LQ problem."""
    config = config or default_settings
    steps = steps_per_unit or config.lqr.optimizer_steps_per_unit
    grid = TimeGrid.with_density(0.0, T, steps)
    result = solve_fth(
        lqr_callbacks(lq), lq.initial_state, grid, options=config.optimizer, label=f"lqr-bb T={T:g}"
    )
    riccati_grid = TimeGrid.with_density(0.0, T, config.lqr.steps_per_unit)
    pi = solve_differential_riccati(lq, feedback_grid_for(riccati_grid))
    riccati_cost = riccati_value(pi, lq.initial_state)
    relative = abs(result.cost.total - riccati_cost) / max(abs(riccati_cost), 1e-300)
    logger.info(
        f"Two routes on T={T:g}, chi={lq.chi:g}: optimizer {result.cost.total:.10g}, "
        f"Riccati {riccati_cost:.10g} (relative gap {relative:.2e})"
    )
    return RouteComparison(
        horizon=T,
        chi=lq.chi,
        optimizer_cost=result.cost.total,
        riccati_cost=riccati_cost,
        relative_gap=relative,
    )

