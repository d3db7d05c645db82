import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from src.core.integrators import rk4_solve
from src.core.trajectories import ControlSignal, RiccatiPath, TimeGrid
from src.errors import ContractViolationError
from src.harness.checks import two_route_costs
from src.optimizer import finite_difference_gradient
from src.problems.periodic_lqr import (
    PeriodicLQ,
    closed_loop,
    counterexample_costs,
    feedback_grid_for,
    initial_norm_rate,
    kalman_rank,
    lqr_callbacks,
    modal_decomposition,
    monodromy,
    phi,
    phi_integral,
    riccati_residual,
    riccati_value,
    solve_differential_riccati,
    solve_periodic_riccati,
    spectral_radius,
    value_bound_constant,
)

from tests.conftest import relative_error


@pytest.fixture(scope="module")
def periodic_pi():
    return solve_periodic_riccati(PeriodicLQ(), 2000)


class TestStructure:
    @pytest.mark.parametrize("t", [0.3, 0.5, 0.7, 1.6, 2.5, 3.99])
    def test_phi_integral_matches_quadrature(self, t):
        kinks = [k + 0.5 for k in range(int(t) + 1) if k + 0.5 < t]
        expected, _ = quad(phi, 0.0, t, points=kinks or None, epsabs=1e-13, limit=200)
        assert phi_integral(t) == pytest.approx(expected, abs=1e-11)

    def test_modes_are_eigenvectors(self):
        lq = PeriodicLQ()
        modes = modal_decomposition(lq)
        assert_allclose(lq.A_base @ modes.e_plus, modes.rates[0] * modes.e_plus, atol=1e-14)
        assert_allclose(lq.A_base @ modes.e_minus, modes.rates[1] * modes.e_minus, atol=1e-14)
        assert modes.rates[0] > 0 > modes.rates[1]

    def test_free_solution_matches_rk4(self):
        lq = PeriodicLQ()
        grid = TimeGrid.with_density(0.0, 1.5, 2000)
        values = rk4_solve(lambda t, y: lq.A(t) @ y, lq.initial_state, grid)
        closed_form = modal_decomposition(lq).free_solution(lq.initial_state, 1.5)
        assert_allclose(values[-1], closed_form, rtol=1e-8)

    @pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 0.9])
    def test_kalman_rank(self, t):
        lq = PeriodicLQ()
        assert kalman_rank(lq, t)
        assert not kalman_rank(lq, t, input_matrix=modal_decomposition(lq).e_plus)

    @pytest.mark.parametrize("u0", [-5.0, 0.0, 5.0])
    def test_control_cannot_affect_initial_norm_rate(self, u0):
        assert initial_norm_rate(PeriodicLQ(), u0) == pytest.approx(4.0)

    def test_negative_terminal_weight_is_rejected(self):
        with pytest.raises(ContractViolationError):
            PeriodicLQ(chi=-1.0)


class TestRiccati:
    @pytest.mark.parametrize("chi", [0.0, 1.0])
    def test_differential_riccati_residual(self, chi):
        lq = PeriodicLQ(chi=chi)
        path = solve_differential_riccati(lq, TimeGrid(0.0, 1.0, 2000))
        assert riccati_residual(lq, path) <= 1e-4
        assert_allclose(path.matrices[-1], chi * np.eye(2))
        assert_allclose(path.matrices, np.transpose(path.matrices, (0, 2, 1)))

    def test_residual_on_a_coarser_grid_across_kinks(self):
        lq = PeriodicLQ(chi=1.0)
        path = solve_differential_riccati(lq, TimeGrid(0.0, 1.5, 1500))
        assert riccati_residual(lq, path) <= 1e-4

    def test_residual_detects_a_corrupted_path(self):
        lq = PeriodicLQ(chi=1.0)
        path = solve_differential_riccati(lq, TimeGrid(0.0, 1.0, 1000))
        matrices = path.matrices.copy()
        matrices[400] += 1e-3 * np.eye(2)
        assert riccati_residual(lq, RiccatiPath(path.grid, matrices)) > 0.1

    def test_periodic_solution(self, periodic_pi):
        lq = PeriodicLQ()
        assert periodic_pi.periodic
        assert np.linalg.norm(periodic_pi.matrices[0] - periodic_pi.matrices[-1]) <= 1e-8
        assert riccati_residual(lq, periodic_pi) <= 1e-4
        assert spectral_radius(monodromy(lq, periodic_pi)) < 1.0

    def test_value_bound_constant_dominates(self, periodic_pi):
        bound = value_bound_constant(periodic_pi)
        z = np.array([0.6, -0.8])
        for t in (0.0, 0.3, 0.7):
            assert riccati_value(periodic_pi, z, t) <= 0.5 * bound + 1e-14

    @pytest.mark.parametrize("chi", [0.0, 1.0])
    def test_riccati_value_matches_closed_loop_cost(self, chi):
        lq = PeriodicLQ(chi=chi)
        grid = TimeGrid.with_density(0.0, 1.0, 2000)
        pi = solve_differential_riccati(lq, feedback_grid_for(grid))
        _, _, cost = closed_loop(lq, pi, grid)
        assert cost.total == pytest.approx(riccati_value(pi, lq.initial_state), rel=1e-6)

    def test_finite_horizon_values_approach_periodic_value(self, periodic_pi):
        lq = PeriodicLQ()
        gaps = []
        for T in (1.0, 2.0, 3.0, 4.0):
            path = solve_differential_riccati(lq, TimeGrid.with_density(0.0, T, 2000))
            gaps.append(np.linalg.norm(path.matrices[0] - periodic_pi.matrices[0]))
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_closed_loop_needs_covering_path(self):
        lq = PeriodicLQ()
        pi = solve_differential_riccati(lq, TimeGrid(0.0, 1.0, 200))
        with pytest.raises(ContractViolationError):
            closed_loop(lq, pi, TimeGrid(0.0, 2.0, 400))

    def test_periodic_riccati_requires_resolution(self):
        with pytest.raises(ContractViolationError):
            solve_periodic_riccati(PeriodicLQ(), 50)


class TestOptimizerRoute:
    @pytest.mark.parametrize("chi", [0.0, 1.0])
    def test_gradient_matches_finite_differences(self, chi, rng):
        lq = PeriodicLQ(chi=chi)
        grid = TimeGrid(0.0, 1.0, 100)
        callbacks = lqr_callbacks(lq)
        u = ControlSignal(grid, rng.standard_normal((grid.n_nodes, 1)))
        entries = [(int(k), 0) for k in rng.choice(grid.n_nodes, size=20, replace=False)]
        fd = finite_difference_gradient(callbacks, lq.initial_state, grid, u, h=1e-5, entries=entries)
        gradient = callbacks.reduced_gradient(lq.initial_state, u)
        rows = [k for k, _ in entries]
        assert relative_error(gradient[rows, 0], fd[rows, 0]) < 1e-5

    @pytest.mark.slow
    @pytest.mark.parametrize("chi", [0.0, 1.0])
    def test_two_routes_agree(self, chi):
        comparison = two_route_costs(PeriodicLQ(chi=chi), 1.0)
        assert comparison.relative_gap < 1e-4
        assert comparison.chi == chi


class TestCounterexample:
    @pytest.mark.parametrize("T", [1.0, 2.0, 3.0])
    def test_simulated_cost_matches_closed_form(self, T):
        costs = counterexample_costs(1.0, T)
        assert costs.fth_cost == pytest.approx(0.5 * math.exp(2.0 * T), rel=1e-8)
        assert costs.relative_error < 1e-8
        assert costs.ith_cost == 0.0

    def test_zero_initial_state(self):
        costs = counterexample_costs(0.0, 2.0)
        assert costs.fth_cost == 0.0
        assert costs.relative_error == 0.0
