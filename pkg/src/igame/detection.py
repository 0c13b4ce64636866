"""Detection of hidden interactivity from a recorded trajectory.

The pipeline: fit an autonomous model and test whether it explains the
derivatives; then, for each candidate (filtration, coupling, goal), extract
pure controls, predict the held-out tail of the history and score how close
the pure control is to a local minimizer of the goal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingForm, simulate_coupled
from .dynamics import (ControlSignal, DynamicsModel, Trajectory, estimate_derivatives,
                       evaluate_rhs, monomial_dictionary, rk4, rk4_step)
from .epsilon import recover_epsilon
from .errors import (DimensionMismatch, EmptyCandidateSet, IGameError, InsufficientData,
                     NonFiniteState)
from .filters import FiltrationSpec, apply_filtration
from .goals import GoalFunctional, evaluate_goal, evaluate_goal_states
from .regression import thresholded_fit

log = logging.getLogger(__name__)

__all__ = [
    "fit_dynamics", "detect_hidden_inputs", "default_threshold", "apply_filtration",
    "evaluate_goal", "local_optimality_score", "select_interactive_model", "Candidate",
    "CandidateRanking", "DetectionVerdict", "SelectionConfig", "analyze_level",
]


def _features(traj, dictionary, use_controls):
    if use_controls:
        if traj.controls is None:
            raise InsufficientData("use_controls requires recorded controls")
        X = np.hstack([traj.states, traj.controls])
    else:
        X = traj.states
    for t in dictionary:
        if len(t.exponents) != X.shape[1]:
            raise DimensionMismatch(
                f"dictionary term {t.exponents} does not match {X.shape[1]} variables")
    exps = np.array([t.exponents for t in dictionary], dtype=int)
    return np.prod(X[:, None, :] ** exps, axis=-1)


def fit_dynamics(traj, dictionary=None, use_controls=False, ridge=0.0, sparsify_threshold=0.0,
                 degree=3):
    """Regress estimated derivatives on dictionary features.

    Returns ``(model, residual_norm)``; the residual is the root-mean-square
    over nodes of the derivative mismatch norm.
    """
    if ridge < 0 or sparsify_threshold < 0:
        raise ValueError("ridge and sparsify_threshold must be >= 0")
    d = traj.state_dim
    k = traj.control_dim if use_controls else 0
    if dictionary is None:
        dictionary = monomial_dictionary(d + k, degree)
    if traj.grid.n_nodes < len(dictionary) + 2:
        raise InsufficientData(
            f"{traj.grid.n_nodes} nodes are too few for {len(dictionary)} dictionary terms")
    X = _features(traj, dictionary, use_controls)
    Y = estimate_derivatives(traj)
    coef, _ = thresholded_fit(X, Y, ridge, sparsify_threshold)
    model = DynamicsModel(d, k, dictionary, coef.T)
    mismatch = Y - X @ coef
    residual = float(np.sqrt(np.mean(np.sum(mismatch ** 2, axis=1))))
    return model, residual


@dataclass(frozen=True)
class DetectionVerdict:
    residual_norm: float
    per_node_residuals: np.ndarray
    verdict: str
    threshold_used: float

    def to_json(self, include_profile=True):
        d = {"residual_norm": self.residual_norm, "verdict": self.verdict,
             "threshold_used": self.threshold_used}
        if include_profile:
            d["per_node_residuals"] = [float(x) for x in self.per_node_residuals]
        return d


def _node_residuals(traj, model):
    deriv = estimate_derivatives(traj)
    return np.linalg.norm(deriv - model.rhs(traj.states), axis=1)


def _model_floor(traj, model, window):
    """Residuals of the model on its own short solutions started from the data.

    Each window of ``window`` steps is re-simulated from the observed state at
    its start, so the residual measures only the differentiation floor of
    noise-free model data near the observed region.  Windows whose
    simulation diverges are skipped.
    """
    n = traj.grid.n_steps
    w = max(2, min(window, n))
    starts = np.arange(0, n - w + 1, w)
    grid = traj.grid.slice(0, w)
    f = lambda k, th, x: model.rhs(x)
    try:
        batches = [rk4(f, traj.states[starts], grid)]
    except NonFiniteState:
        batches = []
        for s0 in starts:
            try:
                batches.append(rk4(f, traj.states[s0][None], grid))
            except NonFiniteState:
                continue
    if not batches:
        return None
    sims = np.concatenate(batches)
    deriv = np.gradient(sims, grid.dt, axis=1, edge_order=2)
    return np.linalg.norm(deriv - model.rhs(sims), axis=-1).ravel()


def default_threshold(traj, model, calibration_fraction=0.5, multiple=5.0, window=20):
    """``multiple`` times the median residual on a calibration prefix.

    The median is taken over short model re-simulations started from the
    observed prefix states (see ``_model_floor``); if every window diverges
    the observed residuals on the prefix are used instead.
    """
    n = traj.grid.n_steps
    stop = max(2, int(round(calibration_fraction * n)))
    prefix = traj.slice(0, min(stop, n))
    floor = _model_floor(prefix, model, window)
    if floor is None:
        floor = _node_residuals(prefix, model)
    scale = float(np.max(np.abs(estimate_derivatives(traj)), initial=0.0))
    return float(multiple * np.median(floor) + 1e-9 * (1.0 + scale))


def detect_hidden_inputs(traj, autonomous_model, threshold=None):
    if autonomous_model.control_dim != 0:
        raise DimensionMismatch("hidden-input detection needs an autonomous model")
    if autonomous_model.state_dim != traj.state_dim:
        raise DimensionMismatch("model and trajectory state dimensions differ")
    if threshold is None:
        threshold = default_threshold(traj, autonomous_model)
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    per_node = _node_residuals(traj, autonomous_model)
    norm = float(np.sqrt(np.mean(per_node ** 2)))
    verdict = "hidden_inputs" if norm > threshold else "autonomous"
    return DetectionVerdict(norm, per_node, verdict, float(threshold))


def smooth_perturbations(rng, n_perturbations, grid, dim, scale, n_modes=4):
    """Random low-frequency cosine series, shape ``(P, n+1, dim)``."""
    tau = np.arange(grid.n_nodes) / grid.n_steps
    basis = np.cos(np.pi * np.arange(n_modes)[:, None] * tau[None, :])
    amps = rng.standard_normal((n_perturbations, dim, n_modes)) / np.sqrt(n_modes)
    return scale * np.einsum("pdm,mn->pnd", amps, basis)


def local_optimality_score(goal, model, coupling, pure_control, traj, n_perturbations=32,
                           perturbation_scale=0.1, seed=0):
    """Fraction of smooth random perturbations of the pure control that raise the goal.

    Epsilon is recovered from the recorded controls and held fixed; the
    perturbed game is re-simulated in closed loop from the recorded initial
    state and compared with the unperturbed re-simulation.
    """
    if int(n_perturbations) != n_perturbations or n_perturbations < 1:
        raise InsufficientData("n_perturbations must be >= 1")
    if not perturbation_scale > 0:
        raise ValueError("perturbation_scale must be positive")
    if traj.controls is None:
        raise InsufficientData("optimality scoring needs recorded controls")
    u0 = pure_control.values if isinstance(pure_control, ControlSignal) else np.asarray(
        pure_control, dtype=float)
    eps = recover_epsilon(coupling, traj.controls, u0, traj).epsilon.values
    rng = np.random.default_rng(seed)
    delta = smooth_perturbations(rng, int(n_perturbations), traj.grid, u0.shape[1],
                                 perturbation_scale)
    batch = np.concatenate([u0[None], u0[None] + delta], axis=0)
    states, _ = simulate_coupled(model, coupling, batch, eps, traj.states[0], traj.grid)
    K = evaluate_goal_states(goal, states, traj.grid.dt)
    return float(np.mean(K[1:] > K[0]))


@dataclass(frozen=True, eq=False)
class Candidate:
    filtration: FiltrationSpec
    coupling: CouplingForm
    goal: GoalFunctional
    name: str = ""

    def to_json(self):
        from .serialize import to_json
        return {"type": "candidate", "name": self.name, "filtration": to_json(self.filtration),
                "coupling": to_json(self.coupling), "goal": to_json(self.goal)}

    @classmethod
    def from_json(cls, d):
        from .serialize import from_json
        return cls(from_json({**d["filtration"], "type": "filtration"}),
                   from_json(d["coupling"]), from_json(d["goal"]), d.get("name", ""))


@dataclass(frozen=True)
class SelectionConfig:
    degree: int = 3
    dictionary: tuple | None = None
    ridge: float = 0.0
    sparsify_threshold: float = 1e-3
    holdout_fraction: float = 0.5
    n_perturbations: int = 32
    perturbation_scale: float = 0.1
    seed: int = 0
    singular_tolerance: float = 1e-10
    threshold: float | None = None

    def to_json(self):
        d = dict(self.__dict__)
        d["dictionary"] = None if self.dictionary is None else [list(t.exponents)
                                                                for t in self.dictionary]
        return d


@dataclass
class CandidateResult:
    name: str
    prediction_error: float
    optimality_score: float
    failure: str | None = None
    pure_control: np.ndarray | None = field(default=None, repr=False)
    epsilon: object = field(default=None, repr=False)

    def to_json(self):
        return {"name": self.name,
                "prediction_error": None if not np.isfinite(self.prediction_error)
                else self.prediction_error,
                "optimality_score": self.optimality_score, "failure": self.failure}


@dataclass
class CandidateRanking:
    candidates: list
    best_index: int
    order: list
    model: DynamicsModel | None = None

    @property
    def best(self):
        return self.candidates[self.best_index] if self.candidates else None

    def to_json(self):
        return {"best_index": self.best_index, "order": list(self.order),
                "candidates": [c.to_json() for c in self.candidates]}


def _split_index(n_steps, holdout_fraction):
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must lie in (0, 1)")
    return int(round((1.0 - holdout_fraction) * n_steps))


def predict_suffix(model, cand, traj, split, eps_held):
    """Closed-loop prediction of the states after node ``split``.

    The candidate filtration is re-evaluated on the predicted states, so its
    pure control acts as feedback.  Memoryless filtrations are evaluated at
    every Runge-Kutta stage; filtrations with memory are recomputed at each
    node on the history (recorded up to ``split``, predicted after) and held
    over the step.  Recorded controls feed any ``u`` input, since the
    predicted control itself depends on the pure control.
    """
    spec = cand.filtration
    coupling = cand.coupling
    grid = traj.grid.slice(split, traj.grid.n_steps)
    x0 = traj.states[split]
    u_obs = traj.controls
    if spec.is_memoryless:
        if "u" in spec.inputs:
            u_tail = u_obs[split:]

            def f(k, theta, x):
                blocks = {"u": _node_value(u_tail, k, theta), "phi": x}
                u0 = spec.pointwise(np.concatenate([blocks[s] for s in spec.inputs]))
                return model.rhs(x, coupling.apply(x, u0, eps_held))
        else:
            def f(k, theta, x):
                return model.rhs(x, coupling.apply(x, spec.pointwise(x), eps_held))
        return rk4(f, x0, grid)

    states = np.array(traj.states, dtype=float)
    u0_node = None

    def f(k, theta, x):
        return model.rhs(x, coupling.apply(x, u0_node, eps_held))

    for k in range(grid.n_steps):
        node = split + k
        u0_node = apply_filtration(
            spec, {"u": u_obs[:node + 1], "phi": states[:node + 1]}).values[-1]
        states[node + 1] = rk4_step(f, k, states[node], grid.dt)
    return states[split:]


def _node_value(series, k, theta):
    if theta == 0.0:
        return series[k]
    return (1.0 - theta) * series[k] + theta * series[k + 1]


def _evaluate_candidate(cand, traj, prefix, split, model, config):
    u = traj.controls
    u0 = apply_filtration(cand.filtration, {"u": ControlSignal(traj.grid, u), "phi": traj}).values
    if u0.shape[1] != cand.coupling.control_dim or u.shape[1] != cand.coupling.control_dim:
        raise DimensionMismatch(
            f"candidate {cand.name!r}: filtration output dim {u0.shape[1]} does not match "
            f"coupling control dim {cand.coupling.control_dim}")
    rep = recover_epsilon(cand.coupling, u[:split + 1], u0[:split + 1], prefix,
                          config.singular_tolerance)
    eps_held = rep.epsilon.values.mean(axis=0)
    pred = predict_suffix(model, cand, traj, split, eps_held)
    err = float(np.sqrt(np.mean(np.sum((pred - traj.states[split:]) ** 2, axis=1))))
    score = local_optimality_score(cand.goal, model, cand.coupling, u0[:split + 1], prefix,
                                   config.n_perturbations, config.perturbation_scale,
                                   config.seed)
    try:
        full = recover_epsilon(cand.coupling, u, u0, traj, config.singular_tolerance)
    except IGameError:
        full = None
    return CandidateResult(cand.name, err, score, None, u0, full)


def select_interactive_model(traj, candidates, holdout_fraction=None, config=None):
    """Rank candidates by held-out state prediction error.

    Pure controls come from each candidate's filtration of the recorded
    history.  The controlled model is fitted on the training prefix with the
    recorded controls; the suffix is predicted in closed loop by feeding the
    filtration of the predicted history through the coupling, with epsilon
    frozen at the mean recovered on the prefix (see ``predict_suffix``).  Ties are
    broken by the higher optimality score, then by the lower index.
    """
    config = config or SelectionConfig()
    if holdout_fraction is None:
        holdout_fraction = config.holdout_fraction
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidateSet("candidate list is empty")
    if traj.controls is None:
        raise InsufficientData("candidate selection needs recorded controls")
    n = traj.grid.n_steps
    split = _split_index(n, holdout_fraction)
    dictionary = list(config.dictionary) if config.dictionary is not None else \
        monomial_dictionary(traj.state_dim + traj.control_dim, config.degree)
    if split + 1 < len(dictionary) + 2 or n - split < 2:
        raise InsufficientData("trajectory too short for the requested holdout split")
    prefix = traj.slice(0, split)
    model, _ = fit_dynamics(prefix, dictionary, True, config.ridge, config.sparsify_threshold)

    results = []
    for cand in candidates:
        try:
            res = _evaluate_candidate(cand, traj, prefix, split, model, config)
        except DimensionMismatch:
            raise
        except IGameError as exc:
            log.info("candidate %r failed: %s", cand.name, exc)
            res = CandidateResult(cand.name, float("inf"), 0.0, f"{type(exc).__name__}: {exc}")
        results.append(res)
    order = sorted(range(len(results)),
                   key=lambda i: (results[i].prediction_error, -results[i].optimality_score, i))
    return CandidateRanking(results, order[0], order, model)


def analyze_level(traj, candidates, config=None):
    """Autonomous fit + hidden-input verdict + candidate ranking on one record."""
    config = config or SelectionConfig()
    model, _ = fit_dynamics(traj, None, False, config.ridge, config.sparsify_threshold,
                            config.degree)
    verdict = detect_hidden_inputs(traj, model, config.threshold)
    ranking = select_interactive_model(traj, candidates, config.holdout_fraction, config)
    return verdict, ranking
