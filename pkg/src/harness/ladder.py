"""Horizon ladders: solve one FTH problem per horizon and judge convergence."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from src.config import ExperimentConfig, ToleranceSettings
from src.core.quadrature import restriction_error
from src.errors import HorizonLabError
from src.harness.artifacts import ArtifactWriter
from src.harness.checks import t_circle_selector, t_circle_verdict
from src.harness.families import HorizonFamily, HorizonSolution
from src.models import HorizonStatus, ProblemFamily, VerdictStatus
from src.schemas import ExperimentReport, HorizonRecord, Verdict, WindowErrors

logger = logging.getLogger(__name__)

V1 = "V1_cost_convergence"
V2 = "V2_window_errors_monotone"
V3 = "V3_fth_below_reference"
COSTS_NONDECREASING = "costs_nondecreasing"
T_CIRCLE = "t_circle_bound"


@dataclass
class LadderOutcome:
    report: ExperimentReport
    solutions: Dict[float, HorizonSolution]
    reference: Optional[HorizonSolution]


# -------------------
# Solving
# -------------------


def _solve_one(
    family: HorizonFamily, horizon: float, warm=None
) -> Tuple[Optional[HorizonSolution], HorizonRecord]:
    try:
        solution = family.solve(horizon, warm)
    except HorizonLabError as e:
        logger.error(f"❌ {family.experiment_id} T={horizon:g} failed: {e}")
        return None, HorizonRecord(horizon=horizon, status=HorizonStatus.FAILED, error=str(e))

    record = HorizonRecord(horizon=horizon, status=HorizonStatus.SOLVED)
    if solution.result is not None:
        record = HorizonRecord(
            horizon=horizon,
            status=HorizonStatus.SOLVED,
            iterations=solution.result.iterations,
            converged=solution.result.converged,
            stop_reason=solution.result.stop_reason,
            final_projected_gradient_norm=solution.result.final_projected_gradient_norm,
        )
    logger.info(f"✅ {family.experiment_id} T={horizon:g}: cost={solution.cost.total:.12g}")
    return solution, record


def solve_ladder(
    family: HorizonFamily,
    horizons: Sequence[float],
    jobs: int = 1,
    warm_start: bool = False,
) -> Tuple[Dict[float, HorizonSolution], List[HorizonRecord]]:
    """Solve every horizon; failures are recorded, not raised.

    With ``warm_start`` the horizons run in order, each seeded by the
    previous control extended to the new horizon; otherwise up to ``jobs`` run
    at once.
    """
    if warm_start and family.uses_optimizer:
        outcomes = []
        warm = None
        for horizon in horizons:
            solution, record = _solve_one(family, horizon, warm)
            outcomes.append((solution, record))
            if solution is not None:
                warm = solution.control
    elif jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda h: _solve_one(family, h), horizons))
    else:
        outcomes = [_solve_one(family, h) for h in horizons]

    solutions = {h: s for h, (s, _) in zip(horizons, outcomes) if s is not None}
    return solutions, [record for _, record in outcomes]


# -------------------
# Verdicts
# -------------------


def _status(ok: bool) -> VerdictStatus:
    return VerdictStatus.PASSED if ok else VerdictStatus.FAILED


def _skipped(name: str, detail: str) -> Verdict:
    return Verdict(name=name, status=VerdictStatus.SKIPPED, detail=detail)


def non_increasing(values: Sequence[float], slack: float) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def cost_convergence_verdict(
    costs: Sequence[float], reference: Optional[float], rtol: float, slack: float
) -> Verdict:
    if reference is None:
        return _skipped(V1, "no independent reference cost")
    if not costs:
        return _skipped(V1, "no horizon completed")
    errors = [abs(c - reference) for c in costs]
    allowed = rtol * abs(reference)
    monotone = non_increasing(errors, slack)
    return Verdict(
        name=V1,
        status=_status(monotone and errors[-1] <= allowed),
        margin=allowed - errors[-1],
        detail=(
            f"|J_T − ref| = {', '.join(f'{e:.4e}' for e in errors)}; "
            f"final relative error {errors[-1] / max(abs(reference), 1e-300):.3e}"
            + ("" if monotone else "; not monotone")
        ),
    )


def window_monotone_verdict(errors: Sequence[WindowErrors], slack: float) -> Verdict:
    if len(errors) < 2:
        return _skipped(V2, "fewer than two completed horizons")
    state = [e.state_error for e in errors]
    control = [e.control_error for e in errors]
    ok = non_increasing(state, slack) and non_increasing(control, slack)
    return Verdict(
        name=V2,
        status=_status(ok),
        margin=min(
            min((a - b for a, b in zip(state, state[1:])), default=0.0),
            min((a - b for a, b in zip(control, control[1:])), default=0.0),
        ),
        detail=(
            f"state: {', '.join(f'{e:.4e}' for e in state)}; "
            f"control: {', '.join(f'{e:.4e}' for e in control)}"
        ),
    )


def fth_bound_verdict(costs: Sequence[float], bound: Optional[float], rtol: float) -> Verdict:
    if bound is None:
        return _skipped(V3, "terminal penalty present or no reference")
    if not costs:
        return _skipped(V3, "no horizon completed")
    allowed = bound * (1.0 + rtol) + 1e-14
    worst = max(costs)
    return Verdict(
        name=V3,
        status=_status(worst <= allowed),
        margin=allowed - worst,
        detail=f"max J_T = {worst:.12g} against bound {bound:.12g}",
    )


def nondecreasing_costs_verdict(costs: Sequence[float], tolerances: ToleranceSettings) -> Verdict:
    if len(costs) < 2:
        return _skipped(COSTS_NONDECREASING, "fewer than two completed horizons")
    drops = [
        a - b - tolerances.fth_below_ith_rtol * abs(a) - tolerances.monotone_slack
        for a, b in zip(costs, costs[1:])
    ]
    worst = max(drops)
    return Verdict(
        name=COSTS_NONDECREASING,
        status=_status(worst <= 0.0),
        margin=-worst,
        detail=f"J_T = {', '.join(f'{c:.10g}' for c in costs)}",
    )


def cost_rtol(family: HorizonFamily, tolerances: ToleranceSettings) -> float:
    if family.family is ProblemFamily.SCALAR:
        return tolerances.scalar_cost_rtol
    return tolerances.lqr_cost_rtol


def evaluate_ladder(
    family: HorizonFamily,
    config: ExperimentConfig,
    solutions: Dict[float, HorizonSolution],
    records: List[HorizonRecord],
) -> Tuple[ExperimentReport, Optional[HorizonSolution]]:
    tolerances = config.tolerances
    window = tuple(config.window)
    reference_cost = family.reference_cost()
    reference = family.reference_pair(window, solutions)

    window_errors: List[Optional[WindowErrors]] = []
    for horizon in config.horizons:
        solution = solutions.get(horizon)
        if solution is None or reference is None:
            window_errors.append(None)
            continue
        window_errors.append(
            WindowErrors(
                state_error=restriction_error(
                    solution.state, reference.state, window, family.state_weight
                ),
                control_error=restriction_error(solution.control, reference.control, window),
            )
        )

    completed = [h for h in config.horizons if h in solutions]
    ladder_costs = [family.ladder_cost(solutions[h]) for h in completed]
    completed_errors = [e for e in window_errors if e is not None]

    verdicts: Dict[str, Verdict] = {
        V1: cost_convergence_verdict(
            ladder_costs, reference_cost, cost_rtol(family, tolerances), tolerances.monotone_slack
        ),
        V2: window_monotone_verdict(completed_errors, tolerances.monotone_slack),
        V3: fth_bound_verdict(
            ladder_costs, family.cost_upper_bound(solutions), tolerances.fth_below_ith_rtol
        ),
    }
    if not family.has_terminal_penalty:
        verdicts[COSTS_NONDECREASING] = nondecreasing_costs_verdict(ladder_costs, tolerances)
    verdicts.update(family.extra_verdicts(solutions))

    t_circle = None
    if completed:
        longest = solutions[completed[-1]]
        inputs = family.t_circle_inputs(longest)
        if inputs is not None:
            penalty, value_start, allowance = inputs
            t_circle = t_circle_selector(
                longest.state, penalty, 0.0, longest.horizon, value_start, allowance, cost=longest.cost.total
            )
            verdicts[T_CIRCLE] = t_circle_verdict(t_circle)

    notes = family.notes()
    failed = [r.horizon for r in records if r.status is HorizonStatus.FAILED]
    if failed:
        notes.append(f"verdicts use completed horizons only; failed: {failed}")
    if reference is None:
        notes.append("no reference pair available for window errors")

    report = ExperimentReport(
        experiment_id=config.experiment_id,
        horizons=list(config.horizons),
        costs=[solutions[h].cost if h in solutions else None for h in config.horizons],
        ith_reference_cost=reference_cost,
        window=window,
        window_errors=window_errors,
        terminal_norms=[
            family.terminal_norm(solutions[h]) if h in solutions else None for h in config.horizons
        ],
        records=records,
        t_circle=t_circle,
        verdicts=verdicts,
        notes=notes,
    )
    for verdict in verdicts.values():
        log = logger.warning if verdict.status is VerdictStatus.FAILED else logger.info
        log(f"[{config.experiment_id}] {verdict.name}: {verdict.status.value} ({verdict.detail})")
    return report, reference


def write_ladder_artifacts(writer: ArtifactWriter, outcome: LadderOutcome, family: HorizonFamily):
    report = outcome.report
    for horizon, solution in sorted(outcome.solutions.items()):
        if family.family is ProblemFamily.SCHLOGL:
            writer.write_controls(horizon, solution.control)
        else:
            writer.write_trajectory(horizon, solution.state, solution.control)
        if solution.result is not None:
            writer.write_trace(horizon, solution.result.trace)
    reference = outcome.reference
    states = {h: s.state for h, s in outcome.solutions.items()}
    controls = {h: s.control for h, s in outcome.solutions.items()}
    if family.family is not ProblemFamily.SCHLOGL:
        writer.write_trajectory_plots(
            states, controls, None if reference is None else (reference.state, reference.control)
        )
    writer.write_convergence(report)
    if reference is not None and outcome.solutions:
        writer.write_error_curves(
            report.window, states, outcome.reference.state, family.state_weight, name="state"
        )
        writer.write_error_curves(report.window, controls, outcome.reference.control, name="control")
    writer.write_report(report)


def run_ladder(
    config: ExperimentConfig,
    family: HorizonFamily,
    writer: Optional[ArtifactWriter] = None,
    warm_start: bool = False,
) -> LadderOutcome:
    logger.info(
        f"🚀 Running {config.experiment_id} over horizons {list(config.horizons)} "
        f"with window {tuple(config.window)}"
    )
    if family.reference_cost() is not None:
        logger.info(f"[{config.experiment_id}] reference cost {family.reference_cost():.12g}")
    solutions, records = solve_ladder(family, config.horizons, config.jobs, warm_start)
    report, reference = evaluate_ladder(family, config, solutions, records)
    outcome = LadderOutcome(report=report, solutions=solutions, reference=reference)
    if writer is not None:
        write_ladder_artifacts(writer, outcome, family)
    return outcome
