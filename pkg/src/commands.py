"""Experiment subcommands.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration
error, 3 numerical failure.
"""
import functools
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click

from src.config import ExperimentConfig, Settings, load_settings
from src.core.exports import write_table, write_text
from src.errors import (
    ConfigurationError,
    ContractViolationError,
    DomainError,
    HorizonLabError,
    UnsupportedFamilyError,
)
from src.harness.artifacts import create_artifact_writer
from src.harness.checks import (
    counterexample_report,
    dpp_check,
    terminal_penalty_effect,
    two_route_costs,
)
from src.harness.families import (
    HorizonFamily,
    PeriodicLqrFamily,
    ScalarFamily,
    SchloglFamily,
    family_horizons,
)
from src.harness.ladder import LadderOutcome, run_ladder, write_ladder_artifacts
from src.models import ProblemFamily, VerdictStatus
from src.schemas import Verdict
from src.schlogl.schlogl_diagnostics import (
    distance_to_constant,
    energy_diagnostics,
    kernel_witness,
    snapshots,
)
from src.schlogl.schlogl_solver import free_dynamics

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

FREE_DYNAMICS_TOL = 0.05


def _float_list(ctx, param, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        return [float(item) for item in value.replace(" ", "").split(",") if item]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def _window(ctx, param, value: Optional[str]):
    values = _float_list(ctx, param, value)
    if values is not None and len(values) != 2:
        raise click.BadParameter("the window takes exactly two numbers, s,r")
    return values


def common_options(f: Callable) -> Callable:
    f = click.option("--config", "config_path", type=click.Path(path_type=Path), help="INI config file")(f)
    f = click.option("--horizons", callback=_float_list, help="Comma-separated horizon ladder")(f)
    f = click.option("--window", callback=_window, help="Comparison window s,r")(f)
    f = click.option("--jobs", type=click.IntRange(min=1), help="Horizons solved in parallel")(f)
    f = click.option("--output", type=click.Path(path_type=Path), help="Output directory")(f)
    return f


def handle_errors(f: Callable[..., bool]) -> Callable:
    """Run a subcommand body returning "all verdicts passed" and map the outcome to an exit code."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            passed = f(*args, **kwargs)
        except (ConfigurationError, DomainError, ContractViolationError, UnsupportedFamilyError) as e:
            logger.error(f"Configuration error: {str(e)}")
            click.echo(f"configuration error: {e}", err=True)
            ctx.exit(EXIT_CONFIG)
        except HorizonLabError as e:
            logger.error(f"Numerical failure: {str(e)}")
            click.echo(f"numerical failure: {e}", err=True)
            ctx.exit(EXIT_NUMERICAL)
        ctx.exit(EXIT_OK if passed else EXIT_VERDICT)

    return wrapper


def _settings(config_path: Optional[Path], section: Optional[str] = None, **overrides: Any) -> Settings:
    """Settings with non-empty flag values layered over the config file and environment."""
    harness = {"jobs": overrides.pop("jobs", None), "output_dir": overrides.pop("output", None)}
    data: Dict[str, Any] = {"harness": {k: v for k, v in harness.items() if v is not None}}
    if section is not None:
        data[section] = {k: v for k, v in overrides.items() if v is not None}
    return load_settings(config_path, data)


def _experiment(family: HorizonFamily, config: Settings) -> ExperimentConfig:
    horizons, window = family_horizons(family)
    return ExperimentConfig.build(
        experiment_id=family.experiment_id,
        horizons=horizons,
        window=window,
        output_dir=config.harness.output_dir,
        jobs=config.harness.jobs,
        tolerances=config.tolerances,
    )


def _echo_verdicts(experiment_id: str, verdicts: Dict[str, Verdict]) -> bool:
    for verdict in verdicts.values():
        click.echo(f"[{experiment_id}] {verdict.name}: {verdict.status.value}")
    return all(v.passed for v in verdicts.values())


def _run_family(family: HorizonFamily, config: Settings, warm_start: bool = False) -> LadderOutcome:
    return run_ladder(_experiment(family, config), family, warm_start=warm_start)


# -------------------
# Subcommand bodies
# -------------------


def run_scalar(config: Settings) -> bool:
    family = ScalarFamily(config)
    outcome = _run_family(family, config, warm_start=config.scalar.warm_start)
    writer = create_artifact_writer(config.harness.output_dir, family.experiment_id)
    write_ladder_artifacts(writer, outcome, family)
    return _echo_verdicts(family.experiment_id, outcome.report.verdicts)


def run_periodic_lqr(config: Settings, compare_routes: bool = False) -> bool:
    outcomes: Dict[float, LadderOutcome] = {}
    passed = True
    for chi in config.lqr.chi:
        family = PeriodicLqrFamily(config, chi=chi)
        outcome = _run_family(family, config)
        if compare_routes:
            comparison = two_route_costs(family.lq, min(config.lqr.horizons), config=config)
            ok = comparison.relative_gap <= 1e-4
            outcome.report.verdicts["two_route_agreement"] = Verdict(
                name="two_route_agreement",
                status=VerdictStatus.PASSED if ok else VerdictStatus.FAILED,
                margin=1e-4 - comparison.relative_gap,
                detail=(
                    f"T={comparison.horizon:g}: optimizer {comparison.optimizer_cost:.10g}, "
                    f"Riccati {comparison.riccati_cost:.10g}"
                ),
            )
        outcomes[chi] = outcome
        writer = create_artifact_writer(config.harness.output_dir, family.experiment_id)
        writer.write_riccati(family.periodic_path)
        write_ladder_artifacts(writer, outcome, family)
        passed &= _echo_verdicts(family.experiment_id, outcome.report.verdicts)

    if 0.0 in outcomes and 1.0 in outcomes:
        verdict = terminal_penalty_effect(outcomes[0.0].report, outcomes[1.0].report)
        path = Path(config.harness.output_dir) / "periodic-lqr-terminal-penalty.json"
        write_text(path, verdict.model_dump_json(indent=2) + "\n")
        passed &= _echo_verdicts("periodic-lqr", {verdict.name: verdict})
    return passed


def run_schlogl(config: Settings, with_free_dynamics: bool = False) -> bool:
    family = SchloglFamily(config)
    outcome = _run_family(family, config)
    report = outcome.report
    writer = create_artifact_writer(config.harness.output_dir, family.experiment_id)

    penalty, mean = kernel_witness(family.problem, family.mesh)
    report.notes.append(f"kernel witness cos(Nπx): penalty {penalty:.3e}, (g(ψ), 1)_H = {mean:.12g}")
    if outcome.solutions:
        longest = outcome.solutions[max(outcome.solutions)]
        energy = energy_diagnostics(family.problem, family.mesh, longest.state, longest.control)
        write_text(writer.root / "energy.json", energy.model_dump_json(indent=2) + "\n")

    if with_free_dynamics or config.schlogl.free_dynamics:
        section = config.schlogl
        path = free_dynamics(family.problem, family.mesh, section.free_horizon, section.dt)
        times = [t for t in section.snapshot_times if t <= section.free_horizon + 1e-12]
        writer.write_snapshots(family.mesh.nodes, times, snapshots(path, times))
        distances = [
            distance_to_constant(family.mesh, row, family.problem.zeta[2]) for row in path.values
        ]
        write_table(writer.root / "free_distance.csv", ["t", "distance"], [path.grid.nodes, distances])
        final = distances[-1]
        report.verdicts["free_dynamics_equilibrium"] = Verdict(
            name="free_dynamics_equilibrium",
            status=VerdictStatus.PASSED if final < FREE_DYNAMICS_TOL else VerdictStatus.FAILED,
            margin=FREE_DYNAMICS_TOL - final,
            detail=f"‖y(T) − ζ₃‖_H = {final:.4e} at T={section.free_horizon:g}",
        )

    write_ladder_artifacts(writer, outcome, family)
    return _echo_verdicts(family.experiment_id, report.verdicts)


def run_counterexample(config: Settings, y0: float, horizons: List[float]) -> bool:
    report = counterexample_report(y0, horizons, rtol=config.tolerances.counterexample_rtol)
    writer = create_artifact_writer(config.harness.output_dir, report.experiment_id)
    write_table(
        writer.root / "costs.csv",
        ["horizon", "fth_cost", "fth_closed_form", "ith_cost", "relative_error"],
        [
            [r.horizon for r in report.rows],
            [r.fth_cost for r in report.rows],
            [r.fth_closed_form for r in report.rows],
            [r.ith_cost for r in report.rows],
            [r.relative_error for r in report.rows],
        ],
    )
    writer.write_report(report)
    return _echo_verdicts(report.experiment_id, report.verdicts)


def run_dpp_check(
    config: Settings,
    family: ProblemFamily,
    z: List[float],
    s: float,
    horizons: List[float],
    steps_per_unit: Optional[int] = None,
) -> bool:
    tolerance = {
        ProblemFamily.SCALAR: config.tolerances.dpp_scalar,
        ProblemFamily.PERIODIC_LQR: config.tolerances.dpp_lqr,
    }.get(family)
    results = [dpp_check(family, z, s, T, steps_per_unit, config) for T in horizons]
    writer = create_artifact_writer(config.harness.output_dir, f"dpp-{family.value}")
    write_table(
        writer.root / "dpp.csv",
        ["horizon", "fth_cost", "value_start", "value_end", "residual"],
        [
            [r.horizon for r in results],
            [r.fth_cost for r in results],
            [r.value_start for r in results],
            [r.value_end for r in results],
            [r.residual for r in results],
        ],
    )
    worst = max(r.residual for r in results)
    verdict = Verdict(
        name="dpp_identity",
        status=VerdictStatus.PASSED if worst < tolerance else VerdictStatus.FAILED,
        margin=tolerance - worst,
        detail=", ".join(f"T={r.horizon:g}: {r.residual:.3e}" for r in results),
    )
    write_text(writer.root / "report.json", verdict.model_dump_json(indent=2) + "\n")
    return _echo_verdicts(f"dpp-{family.value}", {verdict.name: verdict})


# -------------------
# Click commands
# -------------------


@click.command("scalar")
@common_options
@click.option("--n", type=click.IntRange(min=1), help="Nonlinearity degree")
@click.option("--y0", type=float, help="Initial state")
@click.option("--steps-per-unit", type=click.IntRange(min=2))
@click.option("--warm-start/--no-warm-start", default=None, help="Seed each horizon with the previous control")
@handle_errors
def scalar_command(config_path, horizons, window, jobs, output, n, y0, steps_per_unit, warm_start):
    """Scalar nonlinear ladder against the analytic ITH solution."""
    config = _settings(
        config_path,
        "scalar",
        jobs=jobs,
        output=output,
        horizons=horizons,
        window=window,
        n=n,
        y0=y0,
        steps_per_unit=steps_per_unit,
        warm_start=warm_start,
    )
    return run_scalar(config)


@click.command("periodic-lqr")
@common_options
@click.option("--chi", callback=_float_list, help="Comma-separated terminal weights")
@click.option("--z", callback=_float_list, help="Initial state z1,z2")
@click.option("--steps-per-unit", type=click.IntRange(min=2))
@click.option("--compare-routes", is_flag=True, help="Also solve the shortest horizon with the optimizer")
@handle_errors
def periodic_lqr_command(config_path, horizons, window, jobs, output, chi, z, steps_per_unit, compare_routes):
    """Time-periodic LQ ladder against the periodic Riccati feedback."""
    config = _settings(
        config_path,
        "lqr",
        jobs=jobs,
        output=output,
        horizons=horizons,
        window=window,
        chi=chi,
        z=z,
        steps_per_unit=steps_per_unit,
    )
    return run_periodic_lqr(config, compare_routes)


@click.command("schlogl")
@common_options
@click.option("--free-dynamics", is_flag=True, help="Also simulate the uncontrolled model")
@click.option("--n-elements", type=click.IntRange(min=64))
@click.option("--dt", type=click.FloatRange(min=0, min_open=True))
@handle_errors
def schlogl_command(config_path, horizons, window, jobs, output, free_dynamics, n_elements, dt):
    """Schlögl reaction-diffusion ladder against its longest horizon."""
    config = _settings(
        config_path,
        "schlogl",
        jobs=jobs,
        output=output,
        horizons=horizons,
        window=window,
        n_elements=n_elements,
        dt=dt,
    )
    return run_schlogl(config, free_dynamics)


@click.command("counterexample")
@click.option("--config", "config_path", type=click.Path(path_type=Path))
@click.option("--y0", type=float, default=1.0, show_default=True)
@click.option("--horizons", callback=_float_list, default="1,2,3", show_default=True)
@click.option("--output", type=click.Path(path_type=Path))
@handle_errors
def counterexample_command(config_path, y0, horizons, output):
    """Uncoupled system whose FTH costs diverge from the vanishing ITH cost."""
    config = _settings(config_path, output=output)
    return run_counterexample(config, y0, horizons)


@click.command("dpp-check")
@click.option("--config", "config_path", type=click.Path(path_type=Path))
@click.option(
    "--family",
    type=click.Choice([ProblemFamily.SCALAR.value, ProblemFamily.PERIODIC_LQR.value, ProblemFamily.SCHLOGL.value]),
    default=ProblemFamily.SCALAR.value,
    show_default=True,
)
@click.option("--z", callback=_float_list, help="Initial state (one value for scalar, two for LQ)")
@click.option("--s", type=float, default=0.0, show_default=True)
@click.option("--horizons", callback=_float_list, default="1,2", show_default=True)
@click.option("--steps-per-unit", type=click.IntRange(min=2))
@click.option("--output", type=click.Path(path_type=Path))
@handle_errors
def dpp_check_command(config_path, family, z, s, horizons, steps_per_unit, output):
    """Dynamic programming identity along the ITH optimal pair."""
    config = _settings(config_path, output=output)
    selected = ProblemFamily(family)
    if z is None:
        z = [config.scalar.y0] if selected is ProblemFamily.SCALAR else list(config.lqr.z)
    return run_dpp_check(config, selected, z, s, horizons, steps_per_unit)


@click.command("all")
@click.option("--config", "config_path", type=click.Path(path_type=Path))
@click.option("--jobs", type=click.IntRange(min=1))
@click.option("--output", type=click.Path(path_type=Path))
@handle_errors
def all_command(config_path, jobs, output):
    """Every experiment with its configured defaults."""
    config = _settings(config_path, jobs=jobs, output=output)
    results = [
        run_scalar(config),
        run_periodic_lqr(config, compare_routes=True),
        run_counterexample(config, config.scalar.y0, [1.0, 2.0, 3.0]),
        run_dpp_check(config, ProblemFamily.SCALAR, [config.scalar.y0], 0.0, [1.0, 2.0]),
        run_dpp_check(config, ProblemFamily.PERIODIC_LQR, list(config.lqr.z), 0.0, [1.0, 2.0]),
        run_schlogl(config, with_free_dynamics=True),
    ]
    return all(results)


COMMANDS = [
    scalar_command,
    periodic_lqr_command,
    schlogl_command,
    counterexample_command,
    dpp_check_command,
    all_command,
]
