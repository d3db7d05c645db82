import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.exports import write_table, write_trajectory_csv
from src.core.integrators import rk4_forward, rk4_solve
from src.core.quadrature import assemble_cost, resample, restriction_error, trapezoid_l2_sq, window_nodes
from src.core.trajectories import ControlSignal, RiccatiPath, StatePath, TimeGrid, check_finite
from src.errors import BlowUpError, ContractViolationError, DomainError
from src.problems.scalar import ScalarProblem, scalar_system


class TestTimeGrid:
    @pytest.mark.parametrize("t_start,t_end,n_steps", [(0.0, 0.0, 10), (1.0, 0.5, 10), (0.0, 1.0, 1)])
    def test_rejects_degenerate_grids(self, t_start, t_end, n_steps):
        with pytest.raises(ContractViolationError):
            TimeGrid(t_start, t_end, n_steps)

    def test_rejects_infinite_bounds(self):
        with pytest.raises(ContractViolationError):
            TimeGrid(0.0, math.inf, 10)

    def test_weights_integrate_constants_exactly(self):
        grid = TimeGrid(0.5, 2.5, 37)
        assert grid.weights.sum() == pytest.approx(2.0, rel=1e-14)
        assert grid.weights[0] == pytest.approx(0.5 * grid.dt)

    def test_with_density_scales_step_count(self):
        grid = TimeGrid.with_density(0.0, 3.0, 400)
        assert grid.n_steps == 1200
        assert grid.nodes[-1] == pytest.approx(3.0)

    def test_refined_halves_step(self):
        grid = TimeGrid(0.0, 1.0, 10)
        assert grid.refined().dt == pytest.approx(grid.dt / 2)


class TestTrajectories:
    def test_control_rows_must_match_nodes(self):
        grid = TimeGrid(0.0, 1.0, 10)
        with pytest.raises(ContractViolationError):
            ControlSignal(grid, np.zeros(5))

    def test_control_box_is_enforced(self):
        grid = TimeGrid(0.0, 1.0, 10)
        with pytest.raises(ContractViolationError):
            ControlSignal(grid, np.full(11, 2.0), box_bound=1.0)
        ControlSignal(grid, np.full(11, 1.0), box_bound=1.0)

    def test_values_are_read_only(self):
        grid = TimeGrid(0.0, 1.0, 10)
        u = ControlSignal.zeros(grid, 2)
        assert u.channels == 2
        with pytest.raises(ValueError):
            u.values[0, 0] = 1.0

    def test_state_path_reports_first_bad_node(self):
        grid = TimeGrid(0.0, 1.0, 10)
        values = np.ones(11)
        values[4] = np.nan
        values[7] = np.inf
        with pytest.raises(BlowUpError) as excinfo:
            StatePath(grid, values)
        assert excinfo.value.node == 4
        assert excinfo.value.time == pytest.approx(0.4)

    def test_check_finite_threshold(self):
        grid = TimeGrid(0.0, 1.0, 4)
        check_finite(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), grid, threshold=10.0)
        with pytest.raises(BlowUpError):
            check_finite(np.array([1.0, 2.0, 30.0, 4.0, 5.0]), grid, threshold=10.0)

    def test_riccati_interpolation_and_periodic_wrap(self):
        grid = TimeGrid(0.0, 1.0, 4)
        matrices = np.array([np.eye(2) * k for k in range(5)], dtype=float)
        path = RiccatiPath(grid, matrices, periodic=True)
        assert_allclose(path.at(0.25), np.eye(2))
        assert_allclose(path.at(0.375), 1.5 * np.eye(2))
        assert_allclose(path.at(1.375), path.at(0.375))
        assert_allclose(path.at(-0.625), path.at(0.375))


class TestQuadrature:
    def test_trapezoid_is_exact_for_linear_functions(self):
        grid = TimeGrid(0.0, 2.0, 7)
        assert trapezoid_l2_sq(3.0 * grid.nodes + 1.0, grid) == pytest.approx(8.0)

    def test_trapezoid_rejects_wrong_shape(self):
        grid = TimeGrid(0.0, 2.0, 7)
        with pytest.raises(ContractViolationError):
            trapezoid_l2_sq(np.ones(3), grid)

    def test_assemble_cost_halves_each_term(self):
        grid = TimeGrid(0.0, 2.0, 10)
        cost = assemble_cost(np.ones(11), np.zeros(11), 3.0, grid)
        assert cost.state_term == pytest.approx(1.0)
        assert cost.control_term == 0.0
        assert cost.terminal_term == pytest.approx(1.5)
        assert cost.total == pytest.approx(2.5)

    def test_window_nodes_include_both_ends(self):
        coarse = TimeGrid(0.0, 2.0, 4)
        fine = TimeGrid(0.0, 3.0, 30)
        nodes = window_nodes(coarse, fine, (0.25, 1.0))
        assert nodes[0] == 0.25
        assert nodes[-1] == 1.0
        assert np.all(np.diff(nodes) > 0)

    def test_window_outside_grid_is_a_domain_error(self):
        grid = TimeGrid(0.0, 1.0, 10)
        with pytest.raises(DomainError):
            window_nodes(grid, grid, (0.0, 1.5))

    def test_restriction_error_of_constant_offset(self):
        a_grid = TimeGrid(0.0, 2.0, 20)
        b_grid = TimeGrid(0.0, 3.0, 45)
        a = StatePath(a_grid, np.sin(a_grid.nodes))
        b = StatePath(b_grid, np.sin(b_grid.nodes))
        shifted = StatePath(b_grid, np.sin(b_grid.nodes) + 0.5)
        assert restriction_error(a, a, (0.0, 1.0)) == 0.0
        assert restriction_error(b, shifted, (0.0, 1.0)) == pytest.approx(0.5, rel=1e-12)

    def test_restriction_error_sums_channels_and_accepts_weights(self):
        grid = TimeGrid(0.0, 1.0, 10)
        a = StatePath(grid, np.zeros((11, 2)))
        b = StatePath(grid, np.ones((11, 2)))
        assert restriction_error(a, b, (0.0, 1.0)) == pytest.approx(math.sqrt(2.0))
        weighted = restriction_error(a, b, (0.0, 1.0), weight_matrix=np.diag([4.0, 0.0]))
        assert weighted == pytest.approx(2.0)

    def test_restriction_error_rejects_mixed_kinds(self):
        grid = TimeGrid(0.0, 1.0, 10)
        with pytest.raises(ContractViolationError):
            restriction_error(StatePath(grid, np.zeros(11)), ControlSignal.zeros(grid, 1), (0.0, 1.0))

    def test_resample_is_linear_between_nodes(self):
        grid = TimeGrid(0.0, 1.0, 2)
        path = StatePath(grid, np.array([0.0, 1.0, 4.0]))
        assert_allclose(resample(path, np.array([0.25, 0.75]))[:, 0], [0.5, 2.5])


class TestIntegrators:
    def test_rk4_exponential_growth(self):
        grid = TimeGrid(0.0, 1.0, 1000)
        values = rk4_solve(lambda t, y: y, np.array([1.0]), grid)
        assert values[-1, 0] == pytest.approx(math.e, rel=1e-12)

    def test_rk4_backward_sweep_starts_at_the_end(self):
        grid = TimeGrid(0.0, 1.0, 500)
        values = rk4_solve(lambda t, y: -y, np.array([1.0]), grid, backward=True)
        assert values[-1, 0] == 1.0
        assert values[0, 0] == pytest.approx(math.e, rel=1e-11)

    def test_uncontrolled_cubic_blows_up_after_analytic_time(self):
        grid = TimeGrid.with_density(0.0, 1.0, 400)
        system = scalar_system(ScalarProblem(n=2, y0=1.0), threshold=1e8)
        with pytest.raises(BlowUpError) as excinfo:
            rk4_forward(system, np.array([1.0]), grid, np.zeros((grid.n_nodes, 1)))
        assert 0.5 < excinfo.value.time <= 0.5 + 1.5 * grid.dt


class TestExports:
    def test_write_table_round_trip(self, tmp_path):
        path = write_table(tmp_path / "nested" / "table.csv", ["a", "b"], [np.arange(3.0), np.ones(3) / 3])
        lines = path.read_text().splitlines()
        assert lines[0] == "a,b"
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (3, 2)
        assert data[1, 1] == 1.0 / 3.0

    def test_write_table_checks_header_width(self, tmp_path):
        with pytest.raises(ContractViolationError):
            write_table(tmp_path / "bad.csv", ["a"], [np.zeros(2), np.zeros(2)])

    def test_trajectory_csv_columns(self, tmp_path):
        grid = TimeGrid(0.0, 1.0, 4)
        path = write_trajectory_csv(
            tmp_path / "trajectory.csv", StatePath(grid, np.zeros((5, 2))), ControlSignal.zeros(grid, 1)
        )
        assert path.read_text().splitlines()[0] == "t,y1,y2,u1"
