import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.config import ExperimentConfig, OptimizerSettings, Settings
from src.core.trajectories import ControlSignal, TimeGrid
from src.errors import ConfigurationError, ContractViolationError, DomainError
from src.harness.families import SchloglFamily
from src.harness.ladder import V2, run_ladder
from src.models import VerdictStatus
from src.optimizer import finite_difference_gradient, solve_fth
from src.schlogl import (
    SchloglProblem,
    build_mesh,
    cnab_forward,
    control_magnitude_bound,
    distance_to_constant,
    energy_diagnostics,
    free_dynamics,
    kernel_witness,
    project_modes,
    reaction_bound,
    reaction_slope_bound,
    reconstruct,
    schlogl_callbacks,
    schlogl_cost,
    snapshots,
)

from tests.conftest import relative_error


class TestProblem:
    def test_actuator_layout(self, schlogl_problem):
        supports = schlogl_problem.actuator_supports()
        assert len(supports) == 12
        assert supports[0][1] - supports[0][0] == pytest.approx(1.0 / 120.0)
        assert 0.5 * (supports[0][0] + supports[0][1]) == pytest.approx(1.0 / 24.0)

    def test_reaction_roots(self, schlogl_problem):
        assert_allclose(schlogl_problem.reaction(np.array([-1.0, 0.0, 2.0])), 0.0)
        assert schlogl_problem.reaction_derivative(np.array([2.0]))[0] == pytest.approx(-6.0)

    @pytest.mark.parametrize("rho", [0.0, 1.0])
    def test_coverage_must_be_a_fraction(self, rho):
        with pytest.raises(ContractViolationError):
            SchloglProblem(rho=rho)


class TestMesh:
    @pytest.mark.parametrize("n_elements", [32, 64])
    def test_coarse_meshes_are_rejected(self, schlogl_problem, n_elements):
        with pytest.raises(ConfigurationError):
            build_mesh(schlogl_problem, n_elements)

    def test_matrices(self, coarse_mesh):
        ones = np.ones(coarse_mesh.n_nodes)
        assert coarse_mesh.lumped_mass.sum() == pytest.approx(1.0)
        assert_allclose(coarse_mesh.stiffness_matrix @ ones, 0.0, atol=1e-10)
        assert coarse_mesh.h_norm_sq(ones) == pytest.approx(1.0)

    def test_actuator_loads_integrate_indicators(self, coarse_mesh):
        assert_allclose(coarse_mesh.actuator_loads.sum(axis=0), 1.0 / 120.0, rtol=1e-12)

    def test_modes_are_mass_orthonormal(self, coarse_mesh):
        modes = coarse_mesh.modes
        gram = modes.T @ (coarse_mesh.mass_matrix @ modes)
        assert_allclose(gram, np.eye(modes.shape[1]), atol=1e-10)
        assert_allclose(modes[:, 0], 1.0, rtol=1e-12)

    def test_mode_rayleigh_quotient(self, coarse_mesh):
        k = 5
        mode = coarse_mesh.modes[:, k]
        quotient = (mode @ (coarse_mesh.stiffness_matrix @ mode)) / coarse_mesh.h_norm_sq(mode)
        theta = k * math.pi * coarse_mesh.h
        assert abs(quotient / (k * math.pi) ** 2 - 1.0) <= theta**2 / 6.0


class TestProjection:
    def test_constant_lies_in_the_first_mode(self, coarse_mesh):
        coefficients, penalty = project_modes(coarse_mesh, np.full(coarse_mesh.n_nodes, 3.0))
        assert coefficients[0] == pytest.approx(3.0)
        assert_allclose(coefficients[1:], 0.0, atol=1e-12)
        assert penalty == pytest.approx(9.0)

    def test_high_cosine_is_invisible(self, coarse_mesh):
        _, penalty = project_modes(coarse_mesh, np.cos(25.0 * math.pi * coarse_mesh.nodes))
        assert penalty < 1e-12

    def test_projection_is_orthogonal(self, coarse_mesh, rng):
        y = rng.standard_normal(coarse_mesh.n_nodes)
        coefficients, penalty = project_modes(coarse_mesh, y)
        projected = reconstruct(coarse_mesh, coefficients)
        rest = y - projected
        total = coarse_mesh.h_norm_sq(y)
        assert total == pytest.approx(coarse_mesh.h_norm_sq(projected) + coarse_mesh.h_norm_sq(rest), rel=1e-10)
        assert project_modes(coarse_mesh, projected)[1] == pytest.approx(penalty, rel=1e-10)

    def test_shape_is_checked(self, coarse_mesh):
        with pytest.raises(ContractViolationError):
            project_modes(coarse_mesh, np.zeros(5))

    def test_kernel_witness(self, schlogl_problem, coarse_mesh):
        penalty, mean = kernel_witness(schlogl_problem, coarse_mesh)
        assert penalty < 1e-12
        assert mean == pytest.approx(0.5, abs=1e-12)


class TestCnabForward:
    @pytest.mark.parametrize("level", [-1.0, 0.0, 2.0])
    def test_equilibria_are_preserved(self, schlogl_problem, coarse_mesh, level):
        grid = TimeGrid(0.0, 1.0, 1000)
        u = ControlSignal.zeros(grid, schlogl_problem.n_actuators)
        y0 = np.full(coarse_mesh.n_nodes, level)
        path = cnab_forward(schlogl_problem, coarse_mesh, grid, u, y0=y0)
        assert_allclose(path.values, level, atol=1e-10)

    def test_channel_count_is_checked(self, schlogl_problem, coarse_mesh):
        grid = TimeGrid(0.0, 0.1, 100)
        with pytest.raises(ContractViolationError):
            cnab_forward(schlogl_problem, coarse_mesh, grid, ControlSignal.zeros(grid, 3))

    def test_free_dynamics_settle_at_upper_equilibrium(self, schlogl_problem, coarse_mesh):
        path = free_dynamics(schlogl_problem, coarse_mesh, 6.0, 1e-3)
        assert distance_to_constant(coarse_mesh, path.final, 2.0) < 0.05
        columns = snapshots(path, [0.0, 3.0, 6.0])
        assert columns.shape == (coarse_mesh.n_nodes, 3)
        assert_allclose(columns[:, 0], schlogl_problem.initial_state(coarse_mesh.nodes))

    def test_snapshot_outside_path(self, schlogl_problem, coarse_mesh):
        path = free_dynamics(schlogl_problem, coarse_mesh, 0.1, 1e-3)
        with pytest.raises(DomainError):
            snapshots(path, [0.2])


class TestSchloglOptimization:
    def test_gradient_matches_finite_differences(self, schlogl_problem, coarse_mesh, rng):
        grid = TimeGrid(0.0, 0.2, 200)
        callbacks = schlogl_callbacks(schlogl_problem, coarse_mesh, grid)
        z = schlogl_problem.initial_state(coarse_mesh.nodes)
        u = ControlSignal(grid, 5.0 * rng.standard_normal((grid.n_nodes, schlogl_problem.n_actuators)))

        flat = rng.choice(grid.n_nodes * schlogl_problem.n_actuators, size=50, replace=False)
        entries = [divmod(int(i), schlogl_problem.n_actuators) for i in flat]
        fd = finite_difference_gradient(callbacks, z, grid, u, h=1e-4, entries=entries)
        gradient = callbacks.reduced_gradient(z, u)

        rows = tuple(np.array(entries).T)
        assert relative_error(gradient[rows], fd[rows]) < 1e-4
        assert relative_error(gradient[rows] - u.values[rows], fd[rows] - u.values[rows]) < 1e-3

    def test_zero_state_needs_no_control(self, schlogl_problem, coarse_mesh):
        grid = TimeGrid(0.0, 0.1, 100)
        result = solve_fth(
            schlogl_callbacks(schlogl_problem, coarse_mesh, grid),
            np.zeros(coarse_mesh.n_nodes),
            grid,
            box_bound=schlogl_problem.control_bound,
        )
        assert result.iterations == 0
        assert result.cost.total == 0.0

    def test_box_is_respected_and_cost_drops(self, schlogl_problem, coarse_mesh):
        grid = TimeGrid(0.0, 0.1, 100)
        result = solve_fth(
            schlogl_callbacks(schlogl_problem, coarse_mesh, grid),
            schlogl_problem.initial_state(coarse_mesh.nodes),
            grid,
            box_bound=schlogl_problem.control_bound,
            options=OptimizerSettings(max_iterations=20),
            tolerance=1e-6,
        )
        assert np.max(np.abs(result.control.values)) <= schlogl_problem.control_bound
        assert result.cost.total < result.trace[0].cost


class TestDiagnostics:
    def test_reaction_bound(self, schlogl_problem):
        c1, argmax = reaction_bound(schlogl_problem)
        assert c1 == pytest.approx(2.25)
        assert argmax == pytest.approx(0.5)

    def test_reaction_slope_bound(self, schlogl_problem):
        samples = np.linspace(-3.0, 3.0, 60001)
        assert reaction_slope_bound(schlogl_problem) == pytest.approx(7.0 / 3.0)
        assert np.max(schlogl_problem.reaction_derivative(samples)) == pytest.approx(7.0 / 3.0, abs=1e-8)

    def test_stationary_control_respects_the_adjoint_bound(self, schlogl_problem, coarse_mesh):
        grid = TimeGrid(0.0, 0.2, 200)
        result = solve_fth(
            schlogl_callbacks(schlogl_problem, coarse_mesh, grid),
            schlogl_problem.initial_state(coarse_mesh.nodes),
            grid,
            box_bound=schlogl_problem.control_bound,
            tolerance=1e-6,
        )
        bound = control_magnitude_bound(schlogl_problem, coarse_mesh, result.state)
        peak = np.max(np.abs(result.control.values))
        assert 0.0 < peak <= bound
        assert bound < schlogl_problem.control_bound

    def test_control_keeps_cost_below_free_dynamics(self, schlogl_problem, coarse_mesh):
        grid = TimeGrid(0.0, 0.2, 200)
        result = solve_fth(
            schlogl_callbacks(schlogl_problem, coarse_mesh, grid),
            schlogl_problem.initial_state(coarse_mesh.nodes),
            grid,
            box_bound=schlogl_problem.control_bound,
            tolerance=1e-6,
        )
        free = free_dynamics(schlogl_problem, coarse_mesh, 0.2, 1e-3)
        zero = ControlSignal.zeros(free.grid, schlogl_problem.n_actuators)
        assert result.cost.total <= schlogl_cost(schlogl_problem, coarse_mesh, free, zero).total

    def test_reaction_bound_needs_zero_middle_root(self):
        with pytest.raises(ContractViolationError):
            reaction_bound(SchloglProblem(zeta=(-1.0, 0.5, 2.0)))

    def test_energy_report(self, schlogl_problem, coarse_mesh):
        path = free_dynamics(schlogl_problem, coarse_mesh, 0.2, 1e-3)
        u = ControlSignal.zeros(path.grid, schlogl_problem.n_actuators)
        report = energy_diagnostics(schlogl_problem, coarse_mesh, path, u)
        assert report.alpha_next == pytest.approx(40.0 * math.pi**2 + 1.0)
        assert report.kappa == pytest.approx(report.alpha_next - 4.5)
        assert 0.1 - 1e-12 <= report.t_circle <= 0.2 + 1e-12
        assert report.min_state_norm_sq <= report.mean_bound
        assert report.control_energy == 0.0

    def test_energy_report_rejects_bad_start(self, schlogl_problem, coarse_mesh):
        path = free_dynamics(schlogl_problem, coarse_mesh, 0.2, 1e-3)
        with pytest.raises(DomainError):
            energy_diagnostics(schlogl_problem, coarse_mesh, path, s=0.2)


@pytest.mark.slow
class TestSchloglLadder:
    def test_window_errors_decrease_and_box_holds(self, coarse_mesh, tmp_path):
        config = Settings(schlogl={"n_elements": 128})
        family = SchloglFamily(config, mesh=coarse_mesh)
        experiment = ExperimentConfig.build(
            experiment_id=family.experiment_id,
            horizons=config.schlogl.horizons,
            window=config.schlogl.window,
            output_dir=tmp_path,
        )
        outcome = run_ladder(experiment, family)
        verdicts = outcome.report.verdicts
        for name in (V2, "box_feasibility", "adjoint_control_bound", "cost_below_free_dynamics"):
            assert verdicts[name].status is VerdictStatus.PASSED, verdicts[name].detail
        assert len(outcome.solutions) == len(config.schlogl.horizons)

        longest = outcome.solutions[max(outcome.solutions)]
        bound = control_magnitude_bound(family.problem, coarse_mesh, longest.state)
        assert np.max(np.abs(longest.control.values)) <= bound + 1e-6
        assert bound < family.problem.control_bound

        norms = np.sqrt([project_modes(coarse_mesh, y)[1] for y in (longest.state.values[0], longest.state.final)])
        decay = verdicts["controlled_decay"]
        assert decay.margin == pytest.approx(norms[0] / norms[1] - config.tolerances.decay_factor, rel=1e-9)
        assert config.tolerances.decay_factor == 10.0
