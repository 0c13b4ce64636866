import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igame import (Candidate, DynamicsModel, SelectionConfig, TimeGrid, Trajectory, additive,
                   detect_hidden_inputs, fit_dynamics, get_scenario, identity_filtration,
                   integrate, local_optimality_score, monomial_dictionary,
                   select_interactive_model, tracking_goal)
from igame.detection import default_threshold
from igame.dynamics import BasisTerm
from igame.errors import (DegenerateRegression, DimensionMismatch, EmptyCandidateSet,
                          InsufficientData)


def decay_traj(n=500, dt=0.01):
    m = DynamicsModel.from_dict(1, 0, [{(1,): -1.0}])
    return integrate(m, [1.0], None, TimeGrid(0.0, dt, n))


def terms(*exps):
    return [BasisTerm(e) for e in exps]


def test_fit_recovers_decay_rate():
    model, _ = fit_dynamics(decay_traj(), terms((0,), (1,), (2,)), sparsify_threshold=0.0)
    assert np.allclose(model.coefficients[0], [0.0, -1.0, 0.0], atol=1e-3)


def test_fit_of_zero_data():
    traj = Trajectory(TimeGrid(0.0, 0.1, 20), np.zeros(21))
    model, res = fit_dynamics(traj, terms((0,), (1,)))
    assert np.all(model.coefficients == 0.0) and res == 0.0


def test_fit_recovers_control_gain():
    m = DynamicsModel.from_dict(1, 1, [{(0, 1): 2.0}])
    grid = TimeGrid(0.0, 0.01, 500)
    traj = integrate(m, [0.0], np.sin(3 * grid.times), grid)
    model, _ = fit_dynamics(traj, terms((0, 0), (1, 0), (0, 1)), use_controls=True)
    assert abs(model.coefficients[0, 2] - 2.0) < 1e-3


def test_fit_errors():
    traj = decay_traj(3)
    with pytest.raises(InsufficientData):
        fit_dynamics(traj, terms((0,), (1,), (2,)))
    with pytest.raises(InsufficientData):
        fit_dynamics(decay_traj(), terms((0, 1),), use_controls=True)
    with pytest.raises(DegenerateRegression):
        fit_dynamics(decay_traj(), terms((1,)), sparsify_threshold=100.0)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.2, 1.0), b=st.floats(0.5, 2.0), c=st.floats(0.1, 0.5))
def test_in_dictionary_coefficients_within_ten_dt_squared(a, b, c):
    rows = [{(0, 1): 1.0}, {(1, 0): -b, (0, 1): -a, (2, 0): -c}]
    true = DynamicsModel.from_dict(2, 0, rows)
    dt = 0.01
    traj = integrate(true, [1.0, 0.0], None, TimeGrid(0.0, dt, 1000))
    fitted, _ = fit_dynamics(traj, monomial_dictionary(2, 2), sparsify_threshold=1e-3)
    exps = [t.exponents for t in fitted.terms]
    expected = np.zeros_like(fitted.coefficients)
    for i, row in enumerate(rows):
        for e, v in row.items():
            expected[i, exps.index(e)] = v
    assert np.max(np.abs(fitted.coefficients - expected)) < 10 * dt ** 2


def test_autonomous_data_judged_autonomous():
    traj = decay_traj()
    model, _ = fit_dynamics(traj, degree=3)
    assert detect_hidden_inputs(traj, model).verdict == "autonomous"


def square_wave_record():
    m = DynamicsModel.from_dict(1, 1, [{(1, 0): -1.0, (0, 1): 1.0}])
    grid = TimeGrid(0.0, 0.01, 1000)
    u = ((grid.times % 2.0) >= 1.0).astype(float)
    states = integrate(m, [0.5], u, grid).states
    return Trajectory(grid, states), u > 0.5


def test_square_wave_input_is_detected_and_localized():
    traj, on = square_wave_record()
    model, _ = fit_dynamics(traj, degree=3)
    v = detect_hidden_inputs(traj, model)
    assert v.verdict == "hidden_inputs"
    assert v.per_node_residuals.shape == (traj.grid.n_nodes,)
    assert on[int(np.argmax(v.per_node_residuals))]


def test_infinite_threshold_is_autonomous_and_errors():
    traj, _ = square_wave_record()
    model, _ = fit_dynamics(traj, degree=2)
    assert detect_hidden_inputs(traj, model, np.inf).verdict == "autonomous"
    with pytest.raises(ValueError):
        detect_hidden_inputs(traj, model, 0.0)
    controlled = DynamicsModel.from_dict(1, 1, [{(0, 1): 1.0}])
    with pytest.raises(DimensionMismatch):
        detect_hidden_inputs(traj, controlled, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 10.0), st.floats(1.0, 100.0))
def test_verdict_monotone_in_threshold(t1, factor):
    traj, _ = square_wave_record()
    model, _ = fit_dynamics(traj, degree=2)
    low = detect_hidden_inputs(traj, model, t1)
    high = detect_hidden_inputs(traj, model, t1 * factor)
    assert not (low.verdict == "autonomous" and high.verdict == "hidden_inputs")
    assert (low.verdict == "hidden_inputs") == (low.residual_norm > t1)


def test_default_threshold_positive():
    traj = decay_traj()
    model, _ = fit_dynamics(traj, degree=2)
    assert default_threshold(traj, model) > 0


# optimality score on dphi/dt = u with goal int (phi - 1)^2 dt

INTEGRATOR = DynamicsModel.from_dict(1, 1, [{(0, 1): 1.0}])
GRID = TimeGrid(0.0, 0.01, 200)
HOLD = tracking_goal(1, [[1.0]], [1.0])
ADD = additive(1, [1])


def test_exact_minimizer_scores_high():
    traj = integrate(INTEGRATOR, [1.0], np.zeros(201), GRID)
    score = local_optimality_score(HOLD, INTEGRATOR, ADD, np.zeros((201, 1)), traj, 64, 0.1, 0)
    assert score >= 0.95


def random_pure_control(seed):
    rng = np.random.default_rng(100 + seed)
    tau = np.arange(201) / 200
    a = rng.standard_normal(6)
    return (a[:, None] * np.cos(np.pi * np.arange(6)[:, None] * tau)).sum(0)[:, None]


@pytest.mark.parametrize("seed", range(6))
def test_random_pure_control_scores_near_half(seed):
    u0 = random_pure_control(seed)
    traj = integrate(INTEGRATOR, [1.0], u0, GRID)
    score = local_optimality_score(HOLD, INTEGRATOR, ADD, u0, traj, 200, 0.1, seed)
    assert abs(score - 0.5) <= 0.2


def test_score_reproducible_and_validated():
    u0 = random_pure_control(0)
    traj = integrate(INTEGRATOR, [1.0], u0, GRID)
    a = local_optimality_score(HOLD, INTEGRATOR, ADD, u0, traj, 50, 0.1, 7)
    b = local_optimality_score(HOLD, INTEGRATOR, ADD, u0, traj, 50, 0.1, 7)
    assert a == b
    with pytest.raises(InsufficientData):
        local_optimality_score(HOLD, INTEGRATOR, ADD, u0, traj, 0, 0.1, 0)


def test_selection_picks_truth(scenario_ranking):
    rk = scenario_ranking("pursuit")
    assert rk.best_index == 0 and rk.best.name == "pursuit:truth"
    errs = [c.prediction_error for c in rk.candidates]
    assert rk.best_index == int(np.argmin(errs))
    assert all(np.isfinite(c.optimality_score) for c in rk.candidates)


def test_single_and_empty_candidate_sets(scenario_game):
    g = scenario_game("pursuit")
    sc = get_scenario("pursuit")
    cfg = SelectionConfig(degree=1, n_perturbations=4)
    rk = select_interactive_model(g.trajectory, sc.menu()[1:2], config=cfg)
    assert rk.best_index == 0
    with pytest.raises(EmptyCandidateSet):
        select_interactive_model(g.trajectory, [], config=cfg)
    with pytest.raises(InsufficientData):
        select_interactive_model(Trajectory(g.trajectory.grid, g.trajectory.states),
                                 sc.menu(), config=cfg)


@settings(max_examples=5, deadline=None)
@given(st.permutations(range(3)))
def test_ranking_invariant_under_permutation(perm):
    from conftest import game
    sc = get_scenario("saccade")
    traj = game("saccade").trajectory
    menu = sc.menu()
    cfg = SelectionConfig(degree=1, n_perturbations=8)
    base = select_interactive_model(traj, menu, config=cfg)
    shuffled = select_interactive_model(traj, [menu[i] for i in perm], config=cfg)
    assert shuffled.best.name == base.best.name
    by_name = {c.name: (c.prediction_error, c.optimality_score) for c in base.candidates}
    for c in shuffled.candidates:
        assert (c.prediction_error, c.optimality_score) == by_name[c.name]


def test_candidate_dimension_mismatch(scenario_game):
    g = scenario_game("pursuit")
    bad = Candidate(identity_filtration("phi", [[1.0, 0.0]]), additive(4, [1]), HOLD, "bad")
    with pytest.raises(DimensionMismatch):
        select_interactive_model(g.trajectory, [bad], config=SelectionConfig(degree=1))
