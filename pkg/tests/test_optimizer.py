import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.config import OptimizerSettings
from src.core.integrators import ControlledOdeSystem
from src.core.trajectories import ControlSignal, TimeGrid
from src.errors import BlowUpError, ContractViolationError
from src.models import BBMode, StopReason
from src.optimizer import (
    BBState,
    bb_step,
    finite_difference_gradient,
    ode_callbacks,
    project_box,
    solve_fth,
)
from src.optimizer.line_search import NonMonotoneLineSearch
from src.problems.scalar import ScalarProblem, feedback_seed, scalar_callbacks

from tests.conftest import relative_error


def integrator_callbacks():
    """y' = u with cost ½∫ y² + u²; the optimal cost is ½ tanh(T) z²."""
    system = ControlledOdeSystem(
        input_matrix=np.array([[1.0]]),
        drift=lambda t, y: np.zeros_like(y),
        drift_jacobian=lambda t, y: np.zeros((1, 1)),
    )
    return ode_callbacks(
        system,
        running_penalty=lambda Y: Y[:, 0] ** 2,
        running_grad=lambda Y: Y,
        terminal_penalty=lambda y: 0.0,
        terminal_grad=lambda y: np.zeros_like(y),
    )


class TestBarzilaiBorwein:
    def _state(self, mode=BBMode.BB1):
        return BBState(
            iter=0,
            prev_control=np.zeros((3, 1)),
            prev_gradient=np.zeros((3, 1)),
            step=1.0,
            step_bounds=(1e-6, 1e3),
            weights=np.ones(3),
            mode=mode,
        )

    def test_bb1_step_on_a_quadratic(self):
        # g = 4u, so both BB quotients equal 1/4
        u = np.ones((3, 1))
        state, step = bb_step(self._state(), u, 4.0 * u)
        assert step == pytest.approx(0.25)
        assert state.mode is BBMode.BB2
        assert state.iter == 1
        _, step2 = bb_step(state, 2.0 * u, 8.0 * u)
        assert step2 == pytest.approx(0.25)

    def test_negative_curvature_falls_back_to_minimum(self):
        u = np.ones((3, 1))
        _, step = bb_step(self._state(), u, -u)
        assert step == 1e-6

    def test_step_is_clamped(self):
        u = np.ones((3, 1))
        _, step = bb_step(self._state(), u, 1e-9 * u)
        assert step == 1e3

    def test_project_box(self):
        values = np.array([-3.0, 0.5, 7.0])
        assert_allclose(project_box(values, 1.0), [-1.0, 0.5, 1.0])
        assert_allclose(project_box(values, None), values)


class TestNonMonotoneLineSearch:
    def test_accepts_against_worst_remembered_cost(self):
        search = NonMonotoneLineSearch(memory=3)
        search.reset(5.0)
        search.record(1.0)
        assert search.accepts(4.9)
        assert not search.accepts(5.1)
        assert not search.accepts(math.nan)

    def test_memory_forgets_old_costs(self):
        search = NonMonotoneLineSearch(memory=2)
        search.reset(10.0)
        search.record(3.0)
        search.record(2.0)
        assert search.reference == 3.0

    def test_counters(self):
        search = NonMonotoneLineSearch(name="sample")
        search.on_halving()
        search.on_fallback(1e-10)
        state = search.get_state()
        assert state["halvings"] == 1
        assert state["fallbacks"] == 1
        assert state["name"] == "sample"


class TestSolveFth:
    def test_linear_quadratic_optimum(self):
        grid = TimeGrid(0.0, 1.0, 200)
        result = solve_fth(integrator_callbacks(), np.array([1.0]), grid)
        assert result.stop_reason in (StopReason.GRADIENT_TOLERANCE, StopReason.STAGNATION)
        assert result.final_projected_gradient_norm < 1e-5
        assert result.cost.total == pytest.approx(0.5 * math.tanh(1.0), rel=1e-4)
        assert result.trace[0].iter == 0
        assert result.trace[-1].cost == result.cost.total

    def test_box_constraint_is_respected(self):
        grid = TimeGrid(0.0, 1.0, 200)
        free = solve_fth(integrator_callbacks(), np.array([1.0]), grid)
        boxed = solve_fth(integrator_callbacks(), np.array([1.0]), grid, box_bound=0.1)
        assert boxed.stop_reason is not StopReason.ITERATION_CAP
        assert boxed.final_projected_gradient_norm < 1e-5
        assert np.max(np.abs(boxed.control.values)) <= 0.1 + 1e-15
        assert boxed.cost.total > free.cost.total

    def test_zero_state_is_already_optimal(self):
        grid = TimeGrid(0.0, 1.0, 50)
        result = solve_fth(integrator_callbacks(), np.array([0.0]), grid)
        assert result.iterations == 0
        assert result.cost.total == 0.0

    def test_iteration_cap_is_reported(self):
        grid = TimeGrid(0.0, 1.0, 200)
        options = OptimizerSettings(max_iterations=1)
        result = solve_fth(integrator_callbacks(), np.array([1.0]), grid, options=options)
        assert not result.converged
        assert result.stop_reason is StopReason.ITERATION_CAP
        assert result.iterations == 1

    def test_blowup_under_initial_guess(self):
        problem = ScalarProblem(n=2, y0=1.0)
        grid = TimeGrid.with_density(0.0, 1.0, 400)
        with pytest.raises(BlowUpError, match="initial guess"):
            solve_fth(scalar_callbacks(problem), np.array([1.0]), grid)

    def test_blowup_at_the_minimal_step_keeps_the_iterate(self):
        base = integrator_callbacks()

        def forward_solve(z, u):
            if np.any(u.values != 0.0):
                raise BlowUpError("forced", time=0.5, node=25)
            return base.forward_solve(z, u)

        callbacks = dataclasses.replace(base, forward_solve=forward_solve)
        grid = TimeGrid(0.0, 1.0, 50)
        result = solve_fth(callbacks, np.array([1.0]), grid, options=OptimizerSettings(max_halvings=2))
        assert result.stop_reason is StopReason.STEP_BLOWUP
        assert not result.converged
        assert result.iterations == 0
        assert np.all(result.control.values == 0.0)
        assert result.cost.total == pytest.approx(0.5)

    def test_initial_control_shape_is_checked(self):
        grid = TimeGrid(0.0, 1.0, 50)
        with pytest.raises(ContractViolationError):
            solve_fth(integrator_callbacks(), np.array([1.0]), grid, u0=np.zeros((10, 1)))

    def test_initial_control_must_respect_box(self):
        grid = TimeGrid(0.0, 1.0, 50)
        with pytest.raises(ContractViolationError):
            solve_fth(
                integrator_callbacks(), np.array([1.0]), grid, box_bound=0.1, u0=np.ones(51)
            )


class TestReducedGradient:
    def test_scalar_gradient_matches_finite_differences(self, rng):
        problem = ScalarProblem(n=2, y0=1.0)
        grid = TimeGrid(0.0, 1.0, 100)
        callbacks = scalar_callbacks(problem)
        seed = feedback_seed(problem, grid)
        u = ControlSignal(grid, seed.values + 0.05 * rng.standard_normal(seed.values.shape))
        z = np.array([problem.y0])

        entries = [(int(k), 0) for k in rng.choice(grid.n_nodes, size=20, replace=False)]
        fd = finite_difference_gradient(callbacks, z, grid, u, h=1e-5, entries=entries)
        gradient = callbacks.reduced_gradient(z, u)
        rows = [k for k, _ in entries]
        assert relative_error(gradient[rows, 0], fd[rows, 0]) < 1e-5

    def test_finite_difference_rejects_nonpositive_step(self):
        grid = TimeGrid(0.0, 1.0, 10)
        with pytest.raises(ContractViolationError):
            finite_difference_gradient(
                integrator_callbacks(), np.array([1.0]), grid, ControlSignal.zeros(grid, 1), h=0.0
            )
