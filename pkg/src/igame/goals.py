"""Goal functionals ``K = int g(phi, dphi/dt) dt + h(phi(T))``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .dynamics import BasisTerm, Expansion, estimate_derivatives
from .errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class GoalFunctional:
    """Running cost over ``(phi, dphi)``, terminal cost over ``phi``.

    ``horizon`` of None integrates over the whole trajectory; an integer keeps
    only the trailing ``horizon`` steps.
    """

    state_dim: int
    running: Expansion | None = None
    terminal: Expansion | None = None
    horizon: int | None = None
    name: str = ""

    def __post_init__(self):
        d = self.state_dim
        if self.running is not None and self.running.inputs != (("phi", d), ("dphi", d)):
            raise DimensionMismatch("running cost must be an expansion over (phi, dphi)")
        if self.terminal is not None and self.terminal.inputs != (("phi", d),):
            raise DimensionMismatch("terminal cost must be an expansion over phi")
        for part in (self.running, self.terminal):
            if part is not None and part.n_out != 1:
                raise DimensionMismatch("goal expansions must be scalar")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1 step")

    def __eq__(self, other):
        return (isinstance(other, GoalFunctional) and self.state_dim == other.state_dim
                and self.running == other.running and self.terminal == other.terminal
                and self.horizon == other.horizon and self.name == other.name)

    __hash__ = None


def evaluate_goal_states(goal, states, dt):
    """Goal value for state arrays of shape ``(..., n+1, d)`` on a step ``dt``."""
    states = np.asarray(states, dtype=float)
    if states.shape[-1] != goal.state_dim:
        raise DimensionMismatch(
            f"goal expects state dim {goal.state_dim}, got {states.shape[-1]}")
    if goal.horizon is not None:
        states = states[..., -(goal.horizon + 1):, :]
    value = np.zeros(states.shape[:-2])
    if goal.running is not None:
        dphi = np.gradient(states, dt, axis=-2, edge_order=2)
        g = goal.running.evaluate(phi=states, dphi=dphi)[..., 0]
        value = value + trapezoid(g, dx=dt, axis=-1)
    if goal.terminal is not None:
        value = value + goal.terminal.evaluate(phi=states[..., -1, :])[..., 0]
    return value


def evaluate_goal(goal, traj):
    if traj.grid.n_steps < 2 and goal.running is not None:
        # derivative estimate needs three nodes
        estimate_derivatives(traj)
    return float(evaluate_goal_states(goal, traj.states, traj.grid.dt))


def _quadratic_expansion(P, names_dims):
    """Expand ``z^T P z`` with ``z = (vars..., 1)`` into monomials."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0] - 1
    coefs = {}
    for i in range(n + 1):
        for j in range(n + 1):
            if P[i, j] == 0.0:
                continue
            exps = [0] * n
            if i < n:
                exps[i] += 1
            if j < n:
                exps[j] += 1
            key = tuple(exps)
            coefs[key] = coefs.get(key, 0.0) + P[i, j]
    keys = sorted(coefs, key=lambda e: (sum(e), tuple(-x for x in e)))
    if not keys:
        keys = [(0,) * n]
        coefs[keys[0]] = 0.0
    return Expansion([BasisTerm(k) for k in keys], [[coefs[k] for k in keys]], names_dims)


def quadratic_goal(state_dim, P=None, terminal_P=None, horizon=None, name=""):
    """Goal with running cost ``z^T P z``, ``z = (phi, dphi, 1)`` and terminal
    cost ``y^T Pt y``, ``y = (phi, 1)``."""
    d = state_dim
    running = None if P is None else _quadratic_expansion(P, (("phi", d), ("dphi", d)))
    terminal = None if terminal_P is None else _quadratic_expansion(terminal_P, (("phi", d),))
    return GoalFunctional(d, running, terminal, horizon, name)


def tracking_goal(state_dim, rows, targets=None, horizon=None, name=""):
    """``int sum_r (rows[r] . phi - targets[r])^2 dt``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    targets = np.zeros(len(rows)) if targets is None else np.asarray(targets, dtype=float)
    z = np.zeros((len(rows), 2 * state_dim + 1))
    z[:, :state_dim] = rows
    z[:, -1] = -targets
    return quadratic_goal(state_dim, z.T @ z, horizon=horizon, name=name)


def linear_goal(state_dim, weights, name=""):
    """``int weights . phi dt`` (no interior optimum; useful as a decoy)."""
    d = state_dim
    terms = [BasisTerm(tuple(int(i == j) for j in range(2 * d))) for i in range(d)]
    running = Expansion(terms, [list(np.asarray(weights, dtype=float))], (("phi", d), ("dphi", d)))
    return GoalFunctional(d, running, None, None, name)
