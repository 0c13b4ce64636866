import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igame import (ControlSignal, DynamicsModel, TimeGrid, Trajectory, estimate_derivatives,
                   evaluate_rhs, integrate, monomial_dictionary)
from igame.errors import DimensionMismatch, InsufficientData, NonFiniteState


def decay():
    return DynamicsModel.from_dict(1, 0, [{(1,): -1.0}])


def test_zero_model_gives_zero_rhs():
    m = DynamicsModel(2, 1, monomial_dictionary(3, 2), np.zeros((2, 10)))
    assert np.array_equal(evaluate_rhs(m, [0.3, -2.0], [4.0]), np.zeros(2))


def test_linear_term_read_off():
    assert evaluate_rhs(decay(), [2.0]) == pytest.approx([-2.0], abs=0)


def test_quadratic_plus_control_by_hand():
    m = DynamicsModel.from_dict(1, 1, [{(2, 0): 1.0, (0, 1): 3.0}])
    # phi^2 + 3u at phi=2, u=1
    assert evaluate_rhs(m, [2.0], [1.0])[0] == 2.0 ** 2 + 3.0 * 1.0


def test_rhs_dimension_errors():
    m = DynamicsModel.from_dict(1, 1, [{(0, 1): 1.0}])
    with pytest.raises(DimensionMismatch):
        evaluate_rhs(m, [1.0, 2.0], [1.0])
    with pytest.raises(DimensionMismatch):
        evaluate_rhs(m, [1.0])
    with pytest.raises(DimensionMismatch):
        evaluate_rhs(decay(), [1.0], [1.0])


def test_zero_dynamics_constant_trajectory():
    m = DynamicsModel(1, 0, monomial_dictionary(1, 1), np.zeros((1, 2)))
    traj = integrate(m, [1.0], None, TimeGrid(0.0, 0.1, 37))
    assert np.all(traj.states == 1.0)


def test_exponential_decay_against_closed_form():
    traj = integrate(decay(), [1.0], None, TimeGrid(0.0, 0.01, 100))
    assert abs(traj.states[-1, 0] - math.exp(-1.0)) < 1e-6


def test_unit_control_is_exact_at_nodes():
    m = DynamicsModel.from_dict(1, 1, [{(0, 1): 1.0}])
    grid = TimeGrid(0.0, 0.1, 50)
    traj = integrate(m, [0.0], ControlSignal(grid, np.ones(51)), grid)
    assert np.allclose(traj.states[:, 0], grid.times, atol=1e-13, rtol=0)
    assert np.array_equal(traj.controls, np.ones((51, 1)))


def test_linear_control_interpolation():
    # u(t) = t interpolated linearly is exact, so phi = t^2 / 2 at the nodes
    m = DynamicsModel.from_dict(1, 1, [{(0, 1): 1.0}])
    grid = TimeGrid(0.0, 0.05, 40)
    traj = integrate(m, [0.0], grid.times, grid)
    assert np.allclose(traj.states[:, 0], grid.times ** 2 / 2, atol=1e-13)


@pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
def test_integrate_errors():
    m = DynamicsModel.from_dict(1, 1, [{(0, 1): 1.0}])
    grid = TimeGrid(0.0, 0.1, 10)
    with pytest.raises(DimensionMismatch):
        integrate(m, [0.0, 1.0], np.ones(11), grid)
    with pytest.raises(DimensionMismatch):
        integrate(m, [0.0], ControlSignal(TimeGrid(0.0, 0.2, 10), np.ones(11)), grid)
    blowup = DynamicsModel.from_dict(1, 0, [{(3,): 1.0}])
    with pytest.raises(NonFiniteState):
        integrate(blowup, [10.0], None, TimeGrid(0.0, 0.5, 200))


def test_integrate_is_bitwise_deterministic():
    m = DynamicsModel.from_dict(2, 0, [{(0, 1): 1.0}, {(1, 0): -1.0, (0, 3): -0.1}])
    grid = TimeGrid(0.0, 0.01, 300)
    a = integrate(m, [1.0, 0.0], None, grid)
    b = integrate(m, [1.0, 0.0], None, grid)
    assert a.states.tobytes() == b.states.tobytes()


def test_derivative_cases():
    grid = TimeGrid(0.0, 0.1, 20)
    assert np.all(estimate_derivatives(Trajectory(grid, np.full(21, 3.0))) == 0.0)
    assert np.allclose(estimate_derivatives(Trajectory(grid, grid.times)), 1.0, atol=1e-12)
    d = estimate_derivatives(Trajectory(grid, grid.times ** 2))
    # central difference of t^2 is exactly 2t; oracle 2 * 0.5
    assert abs(d[5, 0] - 1.0) < 1e-12
    with pytest.raises(InsufficientData):
        estimate_derivatives(Trajectory(TimeGrid(0.0, 0.1, 1), [0.0, 1.0]))


def test_grid_and_trajectory_invariants():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.0, 5)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.1, 0)
    with pytest.raises(DimensionMismatch):
        Trajectory(TimeGrid(0.0, 0.1, 3), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        Trajectory(TimeGrid(0.0, 0.1, 3), np.zeros(4), np.zeros(3))
    assert np.all(np.diff(TimeGrid(1.0, 0.3, 9).times) > 0)


def _derivative_error(model, x0, dt):
    grid = TimeGrid(0.0, dt, int(round(1.0 / dt)))
    traj = integrate(model, x0, None, grid)
    return np.max(np.abs(estimate_derivatives(traj) - model.rhs(traj.states)))


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-1.0, 1.0), b=st.floats(-0.5, 0.5), c=st.floats(-0.5, 0.5),
       x0=st.floats(0.1, 1.0))
def test_derivative_error_is_second_order(a, b, c, x0):
    model = DynamicsModel.from_dict(2, 0, [{(0, 0): c, (1, 0): a, (0, 1): 1.0},
                                           {(1, 0): -1.0, (2, 0): b}])
    e1 = _derivative_error(model, [x0, 0.0], 0.02)
    e2 = _derivative_error(model, [x0, 0.0], 0.01)
    assert e2 * 3.5 <= e1 or e1 < 1e-11


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=20, max_size=20),
       st.lists(st.floats(-5, 5), min_size=20, max_size=20),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_rhs_linear_in_coefficients(c1, c2, x):
    terms = monomial_dictionary(3, 3)
    c1 = np.array(c1).reshape(1, 20)
    c2 = np.array(c2).reshape(1, 20)
    m1, m2 = DynamicsModel(1, 2, terms, c1), DynamicsModel(1, 2, terms, c2)
    m12 = DynamicsModel(1, 2, terms, c1 + c2)
    lhs = evaluate_rhs(m12, x[:1], x[1:])
    rhs = evaluate_rhs(m1, x[:1], x[1:]) + evaluate_rhs(m2, x[:1], x[1:])
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(lhs).max()), rtol=0)
