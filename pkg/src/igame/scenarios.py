"""Ground-truth interactive games for end-to-end validation.

Each scenario stores its dynamics, coupling, a closed-form linear state
feedback as the pure-control policy (the generating filtration is that
projection of the state), the generating goal, an epsilon process and a menu
of decoy hypotheses.  Generation is a pure function of ``(scenario, seed)``;
random epsilon processes draw from ``numpy.random.default_rng(seed)``
(PCG64).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import additive, state_scaled_channel, CouplingForm
from .detection import Candidate
from .dynamics import ControlSignal, DynamicsModel, TimeGrid, Trajectory, rk4_step
from .epsilon import EpsilonRepresentation
from .errors import DimensionMismatch
from .filters import identity_filtration
from .goals import linear_goal, quadratic_goal, tracking_goal

EPS_KINDS = ("zero", "sines", "saccade", "two_stage")


@dataclass(frozen=True, eq=False)
class Decoy:
    name: str
    weights: tuple | None = None
    goal: object = None


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    model: DynamicsModel
    coupling: CouplingForm
    policy: tuple
    goal: object
    eps_process: dict
    initial_state: tuple
    grid: TimeGrid
    decoys: tuple = ()
    fit_degree: int = 1
    level_menu: tuple | None = None
    description: str = ""

    def __post_init__(self):
        d, k = self.model.state_dim, self.model.control_dim
        W = np.asarray(self.policy, dtype=float)
        if W.shape != (k, d):
            raise DimensionMismatch(f"policy must be a {k}x{d} feedback matrix")
        if self.coupling.state_dim != d or self.coupling.control_dim != k:
            raise DimensionMismatch("coupling does not match the model")
        if len(self.initial_state) != d:
            raise DimensionMismatch("initial state dimension mismatch")
        if self.eps_process.get("kind") not in EPS_KINDS:
            raise ValueError(f"unknown epsilon process {self.eps_process.get('kind')!r}")
        object.__setattr__(self, "policy", tuple(tuple(float(v) for v in r) for r in W))
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))

    @property
    def policy_matrix(self):
        return np.array(self.policy)

    def generating_filtration(self):
        return identity_filtration("phi", self.policy, name=f"{self.name}:policy")

    def generating_candidate(self):
        return Candidate(self.generating_filtration(), self.coupling, self.goal,
                         f"{self.name}:truth")

    def menu(self):
        """Generating candidate followed by the decoys."""
        out = [self.generating_candidate()]
        for dec in self.decoys:
            filt = (self.generating_filtration() if dec.weights is None
                    else identity_filtration("phi", dec.weights, name=dec.name))
            out.append(Candidate(filt, self.coupling, dec.goal or self.goal, dec.name))
        return out

    def to_json(self):
        from .serialize import to_json
        return {
            "type": "scenario",
            "name": self.name,
            "description": self.description,
            "model": to_json(self.model),
            "coupling": to_json(self.coupling),
            "policy": [list(r) for r in self.policy],
            "goal": to_json(self.goal),
            "eps_process": self.eps_process,
            "initial_state": list(self.initial_state),
            "grid": {"t0": self.grid.t0, "dt": self.grid.dt, "n_steps": self.grid.n_steps},
            "decoys": [{"name": d.name,
                        "weights": None if d.weights is None else [list(r) for r in d.weights],
                        "goal": None if d.goal is None else to_json(d.goal)}
                       for d in self.decoys],
            "fit_degree": self.fit_degree,
            "level_menu": None if self.level_menu is None
            else [c.to_json() for c in self.level_menu],
        }

    @classmethod
    def from_json(cls, d):
        from .serialize import from_json
        decoys = tuple(
            Decoy(x["name"],
                  None if x.get("weights") is None else tuple(tuple(r) for r in x["weights"]),
                  None if x.get("goal") is None else from_json(x["goal"]))
            for x in d.get("decoys", []))
        g = d["grid"]
        menu = d.get("level_menu")
        return cls(
            d["name"], from_json(d["model"]), from_json(d["coupling"]),
            tuple(tuple(r) for r in d["policy"]), from_json(d["goal"]), dict(d["eps_process"]),
            tuple(d["initial_state"]), TimeGrid(g["t0"], g["dt"], g["n_steps"]), decoys,
            int(d.get("fit_degree", 1)),
            None if menu is None else tuple(Candidate.from_json(c) for c in menu),
            d.get("description", ""))


@dataclass
class GeneratedGame:
    trajectory: Trajectory
    u: ControlSignal
    u_pure: ControlSignal
    epsilon: EpsilonRepresentation
    events: list = field(default_factory=list)
    seed: int = 0


def _raised_cosine(tau, duration):
    inside = (tau >= 0) & (tau <= duration)
    return np.where(inside, (1.0 - np.cos(2 * np.pi * np.clip(tau, 0, duration) / duration))
                    / duration, 0.0)


class _EpsProcess:
    """Evaluates epsilon at arbitrary times; saccades are scheduled at nodes."""

    def __init__(self, desc, eps_dim, seed):
        self.desc = desc
        self.kind = desc["kind"]
        self.eps_dim = eps_dim
        self.events = []
        if self.kind == "sines":
            rng = np.random.default_rng(seed)
            m = int(desc.get("n_terms", 5))
            lo, hi = desc.get("freq_range", (0.3, 3.0))
            self.freqs = rng.uniform(lo, hi, (eps_dim, m))
            self.phases = rng.uniform(0, 2 * np.pi, (eps_dim, m))
            self.amps = rng.standard_normal((eps_dim, m)) / np.sqrt(m)
            self.scale = float(desc.get("amplitude", 1.0))

    def at(self, t):
        if self.kind == "zero":
            return np.zeros(self.eps_dim)
        if self.kind == "sines":
            return self.scale * np.sum(self.amps * np.sin(self.freqs * t + self.phases), axis=1)
        if self.kind == "two_stage":
            lam, mu, eta0 = (float(self.desc[k]) for k in ("rate", "eta_rate", "eta0"))
            val = eta0 * (lam * np.exp(-lam * t) - mu * np.exp(-mu * t)) / (lam - mu)
            return np.full(self.eps_dim, val)
        out = np.zeros(self.eps_dim)
        D = float(self.desc["duration"])
        for t_s, amp, ch in self.events:
            out[ch] += amp * _raised_cosine(t - t_s, D)
        return out

    def errors(self, x):
        W = np.asarray(self.desc["error_weights"], dtype=float)
        return W @ x

    def observe(self, k, t, x, x_prev):
        if self.kind != "saccade" or x_prev is None:
            return
        b = float(self.desc["bound"])
        e, e_prev = self.errors(x), self.errors(x_prev)
        for ch in range(self.eps_dim):
            if abs(e_prev[ch]) <= b < abs(e[ch]):
                self.events.append((t, -float(e[ch]), ch))


def saccade_crossings(states, error_weights, bound):
    """Upward crossings of ``|error| > bound`` per channel, from node data."""
    e = np.abs(np.asarray(states) @ np.asarray(error_weights, dtype=float).T)
    return [int(np.sum((e[:-1, c] <= bound) & (e[1:, c] > bound))) for c in range(e.shape[1])]


def generate(scenario, seed=0):
    """Closed-loop simulation of the scenario's interactive game."""
    grid = scenario.grid
    model, coupling = scenario.model, scenario.coupling
    W = scenario.policy_matrix
    proc = _EpsProcess(scenario.eps_process, coupling.eps_dim, seed)
    times = grid.times
    dt = grid.dt

    def f(k, theta, x):
        t = grid.t0 + (k + theta) * dt
        u = coupling.apply(x, W @ x, proc.at(t))
        return model.rhs(x, u)

    x = np.array(scenario.initial_state, dtype=float)
    states = np.empty((grid.n_nodes, model.state_dim))
    states[0] = x
    prev = None
    for k in range(grid.n_steps):
        proc.observe(k, times[k], x, prev)
        prev = x
        x = rk4_step(f, k, x, dt)
        states[k + 1] = x
    # a crossing at the final node is recorded although its bump acts after the record
    proc.observe(grid.n_steps, times[-1], x, prev)

    u0 = states @ W.T
    eps = np.array([proc.at(t) for t in times])
    u = coupling.apply(states, u0, eps)
    traj = Trajectory(grid, states, u)
    rep = EpsilonRepresentation(coupling, ControlSignal(grid, eps, "epsilon"), 0.0)
    return GeneratedGame(traj, ControlSignal(grid, u, "interactive"),
                         ControlSignal(grid, u0, "pure"), rep, list(proc.events), seed)


def _m(d, k, rows):
    return DynamicsModel.from_dict(d, k, rows)


def _still_point():
    model = _m(1, 1, [{(0, 1): 1.0}])
    return Scenario(
        "still-point", model, additive(1, [1]), ((0.0,),),
        tracking_goal(1, [[1.0]], [1.0], name="hold-at-1"),
        {"kind": "zero"}, (1.0,), TimeGrid(0.0, 0.01, 500),
        decoys=(Decoy("center", None, tracking_goal(1, [[1.0]], name="center")),
                Decoy("hold-at-2", None, tracking_goal(1, [[1.0]], [2.0], name="hold-at-2"))),
        description="dphi/dt = u with no control at all; the state never moves")


def _free_decay():
    model = _m(1, 1, [{(1, 0): -1.0, (0, 1): 1.0}])
    effort = quadratic_goal(1, np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]),
                            name="no-effort")
    return Scenario(
        "free-decay", model, additive(1, [1]), ((0.0,),), effort,
        {"kind": "zero"}, (1.0,), TimeGrid(0.0, 0.01, 500),
        decoys=(Decoy("center", None, tracking_goal(1, [[1.0]], name="center")),
                Decoy("hold-at-1", None, tracking_goal(1, [[1.0]], [1.0], name="hold-at-1"))),
        description="dphi/dt = -phi + u relaxing freely; goal penalizes control effort")


def _linear_relaxation():
    # x relaxes under a periodic load y carried by an undamped oscillator (y, z)
    omega = 0.8
    model = _m(3, 1, [{(1, 0, 0, 0): -1.0, (0, 1, 0, 0): 1.0, (0, 0, 0, 1): 1.0},
                      {(0, 0, 1, 0): omega}, {(0, 1, 0, 0): -omega}])
    terms = [(0, 0, 0), (2, 0, 0)]
    coupling = CouplingForm([state_scaled_channel(3, 1, terms, [[1.0, 1.0]])], 3)
    return Scenario(
        "linear-relaxation", model, coupling, ((-0.5, 0.0, 0.0),),
        tracking_goal(3, [[1.0, 0.0, 0.0]], name="regulate"),
        {"kind": "sines", "amplitude": 0.2, "n_terms": 5, "freq_range": [0.3, 3.0]},
        (1.0, 1.0, 0.0), TimeGrid(0.0, 0.01, 2000),
        decoys=(Decoy("over-damping", ((-1.5, 0.0, 0.0),), None),
                Decoy("drift-up", None, linear_goal(3, [-1.0, 0.0, 0.0], name="drift-up"))),
        description="x relaxes under a periodic load with extra damping u0 = -x/2 "
                    "and feedback u = u0 + (1 + x^2) eps")


def _pursuit():
    # evader q drifts at speed 0.5 and weaves with the oscillator (r, s)
    model = _m(4, 1, [{(0, 0, 0, 0, 1): 1.0},
                      {(0, 0, 0, 0, 0): 0.5, (0, 0, 1, 0, 0): 1.0},
                      {(0, 0, 0, 1, 0): 1.0}, {(0, 0, 1, 0, 0): -1.0}])
    return Scenario(
        "pursuit", model, additive(4, [1]), ((-1.5, 1.5, 0.0, 0.0),),
        tracking_goal(4, [[1.0, -1.0, 0.0, 0.0]], name="close-gap"),
        {"kind": "sines", "amplitude": 0.4, "n_terms": 5, "freq_range": [0.3, 3.0]},
        (0.0, 1.0, 0.0, 1.0), TimeGrid(0.0, 0.02, 1000),
        decoys=(Decoy("lazy-chase", ((-0.3, 0.3, 0.0, 0.0),), None),
                Decoy("stay-home", None,
                      tracking_goal(4, [[1.0, 0.0, 0.0, 0.0]], name="stay-home"))),
        description="pursuer p chases a weaving evader q; u0 = 1.5 (q - p)")


def _saccade_model(n_obs, omega):
    d = n_obs + 2
    rows = []
    for i in range(n_obs):
        exps = [0] * (d + n_obs)
        exps[d + i] = 1
        rows.append({tuple(exps): 1.0})
    r_exp = [0] * (d + n_obs)
    r_exp[n_obs + 1] = 1
    s_exp = [0] * (d + n_obs)
    s_exp[n_obs] = 1
    rows.append({tuple(r_exp): omega})
    rows.append({tuple(s_exp): -omega})
    return _m(d, n_obs, rows)


def _saccade(n_obs=1):
    omega = 0.5
    gains = [0.8, 0.7][:n_obs]
    d = n_obs + 2
    model = _saccade_model(n_obs, omega)
    policy = np.zeros((n_obs, d))
    err = np.zeros((n_obs, d))
    lazy = np.zeros((n_obs, d))
    for i, g in enumerate(gains):
        policy[i, -1] = g * omega
        lazy[i, -1] = 0.3 * omega
        err[i, i] = 1.0
        err[i, n_obs] = -1.0
    center = np.zeros((n_obs, d))
    center[np.arange(n_obs), np.arange(n_obs)] = 1.0
    name = "saccade" if n_obs == 1 else "saccade-duo"
    x0 = [0.0] * n_obs + [0.0, 1.0]
    return Scenario(
        name, model, additive(d, [1] * n_obs), tuple(map(tuple, policy)),
        tracking_goal(d, err, name="stable-image"),
        {"kind": "saccade", "bound": 0.1, "duration": 1.5, "error_weights": err.tolist()},
        tuple(x0), TimeGrid(0.0, 0.02, 1500),
        decoys=(Decoy("lazy-pursuit", tuple(map(tuple, lazy)), None),
                Decoy("look-up", None, linear_goal(d, -center.sum(axis=0), name="look-up"))),
        description="gaze g follows an oscillating image r with partial smooth pursuit; "
                    "saccades fire when |g - r| crosses the bound",
    )


def _two_stage():
    lam, mu, eta0 = 0.2, 0.01, 1.0
    omega = 0.8
    model = _m(3, 1, [{(1, 0, 0, 0): -1.0, (0, 1, 0, 0): 1.0, (0, 0, 0, 1): 1.0},
                      {(0, 0, 1, 0): omega}, {(0, 1, 0, 0): -omega}])
    level = additive(1, [1])
    # u0 = -lam E is the optimal feedback for int (lam^2 E^2 + (dE/dt)^2) dt
    lq = quadratic_goal(1, np.diag([lam * lam, 1.0, 0.0]), name="desire:lq-regulate")
    level_menu = (
        Candidate(identity_filtration("phi", ((-lam,),), name="desire:relax"), level,
                  lq, "level1:truth"),
        Candidate(identity_filtration("phi", ((-0.3 * lam,),), name="desire:sluggish"), level,
                  lq, "level1:sluggish"),
        Candidate(identity_filtration("phi", ((-3.0 * lam,),), name="desire:eager"), level,
                  lq, "level1:eager"),
    )
    return Scenario(
        "two-stage", model, additive(3, [1]), ((-0.5, 0.0, 0.0),),
        tracking_goal(3, [[1.0, 0.0, 0.0]], name="regulate"),
        {"kind": "two_stage", "rate": lam, "eta_rate": mu, "eta0": eta0},
        (0.0, 1.0, 0.0), TimeGrid(0.0, 0.01, 2000),
        decoys=(Decoy("over-damping", ((-1.5, 0.0, 0.0),), None),
                Decoy("drift-up", None, linear_goal(3, [-1.0, 0.0, 0.0], name="drift-up"))),
        level_menu=level_menu,
        description="x relaxes under a periodic load; epsilon is itself an interactive "
                    "game whose integral E obeys dE/dt = -E/5 + eta with "
                    "eta = exp(-t/100)")


def builtin_catalog():
    return [_still_point(), _free_decay(), _linear_relaxation(), _pursuit(), _saccade(1),
            _saccade(2)]


def two_stage_fixture():
    """Nested game used to exercise recursive unraveling (not a catalog entry)."""
    return _two_stage()


def get_scenario(name):
    for sc in builtin_catalog() + [_two_stage()]:
        if sc.name == name:
            return sc
    raise KeyError(name)
