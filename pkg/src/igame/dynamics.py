"""Controlled dynamical systems on uniform time grids.

A model is a dictionary expansion ``dphi/dt = C @ psi(phi, u)`` where every
``psi`` is a monomial over the state and control coordinates.  Integration is
classic RK4 with controls interpolated linearly between grid nodes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InsufficientData, NonFiniteState

ROLES = ("interactive", "pure", "epsilon", "desire")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def n_nodes(self):
        return self.n_steps + 1

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_nodes)

    @property
    def duration(self):
        return self.dt * self.n_steps

    def slice(self, start, stop):
        """Sub-grid over nodes ``start..stop`` inclusive."""
        return TimeGrid(self.t0 + start * self.dt, self.dt, stop - start)


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray
    controls: np.ndarray | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2 or states.shape[0] != self.grid.n_nodes:
            raise DimensionMismatch(
                f"states must have {self.grid.n_nodes} rows, got shape {states.shape}")
        object.__setattr__(self, "states", _frozen(states))
        if self.controls is not None:
            controls = np.asarray(self.controls, dtype=float)
            if controls.ndim == 1:
                controls = controls[:, None]
            if controls.shape[0] != self.grid.n_nodes:
                raise DimensionMismatch(
                    f"controls must have {self.grid.n_nodes} rows, got shape {controls.shape}")
            object.__setattr__(self, "controls", _frozen(controls))

    @property
    def state_dim(self):
        return self.states.shape[1]

    @property
    def control_dim(self):
        return 0 if self.controls is None else self.controls.shape[1]

    @property
    def times(self):
        return self.grid.times

    def slice(self, start, stop):
        """Sub-trajectory over nodes ``start..stop`` inclusive."""
        ctrl = None if self.controls is None else self.controls[start:stop + 1]
        return Trajectory(self.grid.slice(start, stop), self.states[start:stop + 1], ctrl)


@dataclass(frozen=True)
class ControlSignal:
    grid: TimeGrid
    values: np.ndarray
    role: str = "interactive"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.n_nodes:
            raise DimensionMismatch(
                f"signal must have {self.grid.n_nodes} rows, got shape {values.shape}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def dim(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class BasisTerm:
    """One monomial; ``exponents`` runs over the concatenated input variables."""

    exponents: tuple

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        object.__setattr__(self, "exponents", exps)

    @property
    def degree(self):
        return sum(self.exponents)

    def label(self, names):
        parts = []
        for name, e in zip(names, self.exponents):
            if e == 1:
                parts.append(name)
            elif e > 1:
                parts.append(f"{name}^{e}")
        return "*".join(parts) or "1"


def monomial_dictionary(n_vars, degree=3):
    """All monomials in ``n_vars`` variables of total degree <= ``degree``.

    Ordered by degree, then lexicographically by the variables involved.
    """
    terms = []
    for deg in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_vars), deg):
            exps = [0] * n_vars
            for i in combo:
                exps[i] += 1
            terms.append(BasisTerm(tuple(exps)))
    return terms


def linear_terms(n_vars, constant=False):
    terms = [BasisTerm(tuple(int(i == j) for j in range(n_vars))) for i in range(n_vars)]
    if constant:
        terms.insert(0, BasisTerm((0,) * n_vars))
    return terms


class Expansion:
    """Vector-valued dictionary expansion over named input blocks.

    ``inputs`` is a sequence of ``(name, dim)`` pairs; the variables of the
    monomials are the concatenation of those blocks in order.
    """

    def __init__(self, terms, coefficients, inputs):
        self.inputs = tuple((str(n), int(d)) for n, d in inputs)
        self.terms = tuple(t if isinstance(t, BasisTerm) else BasisTerm(tuple(t)) for t in terms)
        n_vars = self.n_vars
        for t in self.terms:
            if len(t.exponents) != n_vars:
                raise DimensionMismatch(
                    f"term {t.exponents} does not match {n_vars} input variables")
        coef = np.array(coefficients, dtype=float)
        if coef.ndim == 1:
            coef = coef[None, :]
        if coef.ndim != 2 or coef.shape[1] != len(self.terms):
            raise DimensionMismatch(
                f"coefficient matrix shape {coef.shape} does not match {len(self.terms)} terms")
        coef.setflags(write=False)
        self.coefficients = coef
        self._exps = np.array([t.exponents for t in self.terms], dtype=int).reshape(
            len(self.terms), n_vars)

    @property
    def n_vars(self):
        return sum(d for _, d in self.inputs)

    @property
    def n_out(self):
        return self.coefficients.shape[0]

    @classmethod
    def zero(cls, terms, n_out, inputs):
        return cls(terms, np.zeros((n_out, len(terms))), inputs)

    def variable_names(self):
        names = []
        for name, dim in self.inputs:
            names.extend(f"{name}_{i + 1}" for i in range(dim))
        return names

    def features(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_vars:
            raise DimensionMismatch(f"expected {self.n_vars} input variables, got {X.shape[-1]}")
        if not self.terms:
            return np.zeros(X.shape[:-1] + (0,))
        return np.prod(X[..., None, :] ** self._exps, axis=-1)

    def __call__(self, X):
        return self.features(X) @ self.coefficients.T

    def stack_inputs(self, blocks):
        """Concatenate named blocks (mapping name -> array) in input order."""
        parts = []
        for name, dim in self.inputs:
            if name not in blocks:
                raise DimensionMismatch(f"missing input block {name!r}")
            arr = np.asarray(blocks[name], dtype=float)
            if dim == 0:
                continue
            if arr.shape[-1] != dim:
                raise DimensionMismatch(f"input {name!r} has dim {arr.shape[-1]}, expected {dim}")
            parts.append(arr)
        if not parts:
            shape = next(iter(np.asarray(b).shape[:-1] for b in blocks.values()))
            return np.zeros(shape + (0,))
        return _bcast_concat(parts)

    def evaluate(self, **blocks):
        return self(self.stack_inputs(blocks))

    def with_coefficients(self, coefficients):
        return type(self)._rebuild(self, coefficients)

    @staticmethod
    def _rebuild(obj, coefficients):
        return Expansion(obj.terms, coefficients, obj.inputs)

    def __eq__(self, other):
        return (isinstance(other, Expansion) and self.inputs == other.inputs
                and self.terms == other.terms
                and np.array_equal(self.coefficients, other.coefficients))

    def __repr__(self):
        return f"Expansion(inputs={self.inputs}, n_terms={len(self.terms)}, n_out={self.n_out})"


def _bcast_concat(parts):
    lead = np.broadcast_shapes(*[p.shape[:-1] for p in parts])
    return np.concatenate([np.broadcast_to(p, lead + p.shape[-1:]) for p in parts], axis=-1)


class DynamicsModel(Expansion):
    """Right-hand side ``Phi(phi, u)`` as an expansion over ``(phi, u)``."""

    def __init__(self, state_dim, control_dim, terms, coefficients):
        super().__init__(terms, coefficients, (("phi", state_dim), ("u", control_dim)))
        if self.n_out != state_dim:
            raise DimensionMismatch(
                f"coefficient matrix must have {state_dim} rows, got {self.n_out}")

    @property
    def state_dim(self):
        return self.inputs[0][1]

    @property
    def control_dim(self):
        return self.inputs[1][1]

    @staticmethod
    def _rebuild(obj, coefficients):
        return DynamicsModel(obj.state_dim, obj.control_dim, obj.terms, coefficients)

    @classmethod
    def from_dict(cls, state_dim, control_dim, rows):
        """Build from ``rows[i] = {exponent tuple: coefficient}`` per state coordinate."""
        terms = []
        for row in rows:
            for exps in row:
                if tuple(exps) not in terms:
                    terms.append(tuple(exps))
        coef = np.zeros((state_dim, len(terms)))
        for i, row in enumerate(rows):
            for exps, c in row.items():
                coef[i, terms.index(tuple(exps))] = c
        return cls(state_dim, control_dim, terms, coef)

    def rhs(self, state, control=None):
        state = np.asarray(state, dtype=float)
        if self.control_dim == 0:
            X = state
        else:
            control = np.asarray(control, dtype=float)
            X = _bcast_concat([state, control])
        return self(X)


def evaluate_rhs(model, state, control=None):
    state = np.atleast_1d(np.asarray(state, dtype=float))
    if state.shape[-1] != model.state_dim:
        raise DimensionMismatch(
            f"state has dimension {state.shape[-1]}, model expects {model.state_dim}")
    if model.control_dim:
        if control is None:
            raise DimensionMismatch("model expects a control vector")
        control = np.atleast_1d(np.asarray(control, dtype=float))
        if control.shape[-1] != model.control_dim:
            raise DimensionMismatch(
                f"control has dimension {control.shape[-1]}, model expects {model.control_dim}")
    elif control is not None and np.size(control):
        raise DimensionMismatch("autonomous model takes no control")
    return model.rhs(state, control)


def _node_interp(values, k, theta):
    if theta == 0.0:
        return values[..., k, :]
    if theta == 1.0:
        return values[..., k + 1, :]
    return (1.0 - theta) * values[..., k, :] + theta * values[..., k + 1, :]


def rk4(f, x0, grid):
    """Fixed-step RK4 for ``dx/dt = f(k, theta, x)``.

    ``k`` is the current step index and ``theta`` in {0, 0.5, 1} the fraction
    of the step, so callers can interpolate node data.  ``x0`` may carry
    leading batch dimensions; the result has shape ``x0.shape[:-1] + (n+1, d)``.
    """
    x = np.array(x0, dtype=float)
    dt = grid.dt
    out = np.empty((grid.n_nodes,) + x.shape)
    out[0] = x
    for k in range(grid.n_steps):
        x = rk4_step(f, k, x, dt)
        out[k + 1] = x
    return np.moveaxis(out, 0, -2)


def rk4_step(f, k, x, dt):
    k1 = f(k, 0.0, x)
    k2 = f(k, 0.5, x + 0.5 * dt * k1)
    k3 = f(k, 0.5, x + 0.5 * dt * k2)
    k4 = f(k, 1.0, x + dt * k3)
    x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"state left the finite range at node {k + 1}", node=k + 1)
    return x


def integrate(model, initial_state, controls, grid):
    """Simulate ``model`` from ``initial_state`` with node-sampled ``controls``.

    ``controls`` is a ControlSignal, an array of shape ``(n+1, k)`` or None for
    autonomous models.  Returns a Trajectory that stores the controls used.
    """
    x0 = np.atleast_1d(np.asarray(initial_state, dtype=float))
    if x0.shape[-1] != model.state_dim:
        raise DimensionMismatch(
            f"initial state has dimension {x0.shape[-1]}, model expects {model.state_dim}")
    if model.control_dim == 0:
        if controls is not None and np.size(getattr(controls, "values", controls)):
            raise DimensionMismatch("autonomous model takes no controls")
        states = rk4(lambda k, th, x: model.rhs(x), x0, grid)
        return Trajectory(grid, states)
    if controls is None:
        raise DimensionMismatch("controlled model requires a control signal")
    if isinstance(controls, ControlSignal):
        if controls.grid != grid:
            raise DimensionMismatch("control signal is defined on a different grid")
        values = controls.values
    else:
        values = np.asarray(controls, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
    if values.shape != (grid.n_nodes, model.control_dim):
        raise DimensionMismatch(
            f"controls must have shape {(grid.n_nodes, model.control_dim)}, got {values.shape}")
    states = rk4(lambda k, th, x: model.rhs(x, _node_interp(values, k, th)), x0, grid)
    return Trajectory(grid, states, values)


def estimate_derivatives(traj):
    """Central differences inside, second-order one-sided at the two ends."""
    if traj.grid.n_steps < 2:
        raise InsufficientData("need at least 2 steps to estimate derivatives")
    return np.gradient(np.asarray(traj.states), traj.grid.dt, axis=0, edge_order=2)
