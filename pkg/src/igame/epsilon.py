"""Epsilon representation of interactive controls, desires and recursive unraveling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .dynamics import ControlSignal, Expansion, Trajectory, monomial_dictionary
from .errors import DimensionMismatch, InsufficientData, MissingInput, SingularCoupling
from .filters import apply_filtration
from .regression import thresholded_fit


@dataclass(frozen=True)
class EpsilonRepresentation:
    coupling: object
    epsilon: ControlSignal
    recovery_residual: float

    def replay(self, u_pure, traj):
        return self.coupling.apply(traj.states, _values(u_pure), self.epsilon.values)


def _values(sig):
    return sig.values if isinstance(sig, ControlSignal) else np.asarray(sig, dtype=float)


def recover_epsilon(coupling, u, u_pure, traj, singular_tolerance=1e-10):
    """Invert ``u = A + B eps`` node by node in the least-squares sense.

    Raises SingularCoupling at the first node where the smallest singular
    value of some channel's ``B`` drops below ``singular_tolerance``.
    """
    if singular_tolerance <= 0:
        raise ValueError("singular_tolerance must be positive")
    u_vals = _values(u)
    u0 = _values(u_pure)
    phi = traj.states
    for name, arr in (("u", u_vals), ("u_pure", u0)):
        if arr.shape != (traj.grid.n_nodes, coupling.control_dim):
            raise DimensionMismatch(
                f"{name} must have shape {(traj.grid.n_nodes, coupling.control_dim)}, got {arr.shape}")
    if phi.shape[1] != coupling.state_dim:
        raise DimensionMismatch("trajectory state dim does not match the coupling")
    for sig in (u, u_pure):
        if isinstance(sig, ControlSignal) and sig.grid != traj.grid:
            raise DimensionMismatch("signals must share the trajectory grid")

    n = traj.grid.n_nodes
    eps = np.zeros((n, coupling.eps_dim))
    residual = 0.0
    for ch, su, se, a, b in coupling.channel_matrices(phi, u0):
        U, s, Vt = np.linalg.svd(b, full_matrices=False)
        smin = s.min(axis=-1)
        bad = np.flatnonzero(smin < singular_tolerance)
        if bad.size:
            node = int(bad[0])
            raise SingularCoupling(
                f"coupling is singular at node {node} (smallest singular value {smin[node]:.3g})",
                node)
        rhs = u_vals[:, su] - a
        coeffs = np.einsum("nij,ni->nj", U, rhs) / s
        e = np.einsum("nji,nj->ni", Vt, coeffs)
        eps[:, se] = e
        fitted = a + np.einsum("nij,nj->ni", b, e)
        if fitted.size:
            residual = max(residual, float(np.max(np.linalg.norm(rhs + a - fitted, axis=1))))
    return EpsilonRepresentation(coupling, ControlSignal(traj.grid, eps, "epsilon"), residual)


def extract_desires(specs, eps, traj):
    """One desire signal per filtration; only ``eps`` and ``phi`` may feed them."""
    out = []
    signals = {"eps": eps.epsilon, "phi": traj}
    for spec in specs:
        if "u" in spec.inputs:
            raise MissingInput("desire filtrations read only eps and phi")
        sig = apply_filtration(spec, signals)
        out.append(ControlSignal(sig.grid, sig.values, "desire"))
    return out


@dataclass(frozen=True)
class DesireMap:
    """``eps = map(v0, phi)``; ``expansion`` is over inputs ``(v0, phi)``."""

    expansion: Expansion
    residual: float

    def __call__(self, v0, phi):
        return self.expansion.evaluate(v0=v0, phi=phi)

    def to_json(self):
        from .serialize import expansion_to_json
        return {"type": "desire_map", "expansion": expansion_to_json(self.expansion),
                "residual": self.residual}

    @classmethod
    def from_json(cls, d):
        from .serialize import expansion_from_json
        return cls(expansion_from_json(d["expansion"]), float(d["residual"]))


def _stack_desires(desires):
    if not desires:
        raise MissingInput("at least one desire signal is required")
    return np.hstack([_values(v) for v in desires])


def fit_desire_map(desires, traj, eps, dictionary=None, ridge=0.0, degree=1):
    """Least-squares fit of epsilon against monomials of ``(v0, phi)``.

    ``dictionary`` defaults to all monomials of total degree <= ``degree``.
    The reported residual is the root-mean-square misfit.
    """
    v = _stack_desires(desires)
    phi = traj.states
    e = eps.epsilon.values
    if not (v.shape[0] == phi.shape[0] == e.shape[0]):
        raise DimensionMismatch("desires, states and epsilon must share the grid")
    inputs = (("v0", v.shape[1]), ("phi", phi.shape[1]))
    terms = dictionary if dictionary is not None else monomial_dictionary(
        v.shape[1] + phi.shape[1], degree)
    n = v.shape[0]
    if n < len(terms):
        raise InsufficientData(f"{n} nodes cannot determine {len(terms)} map coefficients")
    skeleton = Expansion.zero(terms, e.shape[1], inputs)
    X = skeleton.features(np.hstack([v, phi]))
    coef, _ = thresholded_fit(X, e, ridge, 0.0)
    expansion = skeleton.with_coefficients(coef.T)
    misfit = e - X @ coef
    residual = float(np.sqrt(np.mean(misfit ** 2))) if misfit.size else 0.0
    return DesireMap(expansion, residual)


def lift_epsilon(eps):
    """Trajectory whose state is the running integral of epsilon and whose
    control is epsilon itself, so ``d state / dt = control``.  The integral
    uses the cumulative Simpson rule, keeping quadrature error well below
    the central-difference error of derivative estimation."""
    e = eps.epsilon.values
    grid = eps.epsilon.grid
    states = cumulative_simpson(e, dx=grid.dt, axis=0, initial=0.0)
    return Trajectory(grid, states, e)


@dataclass
class UnravelLevel:
    level: int
    verdict: object
    ranking: object
    epsilon: EpsilonRepresentation | None
    child: "UnravelLevel | None" = None

    def to_json(self):
        return {
            "level": self.level,
            "verdict": self.verdict.to_json(include_profile=False),
            "ranking": None if self.ranking is None else self.ranking.to_json(),
            "recovery_residual": None if self.epsilon is None else self.epsilon.recovery_residual,
            "child": None if self.child is None else self.child.to_json(),
        }

    def levels(self):
        node = self
        while node is not None:
            yield node
            node = node.child


def unravel_recursive(traj, eps, candidate_menus, depth, config=None):
    """Treat epsilon as new system magnitudes and rerun detection on them.

    Level ``L`` works on the lifted trajectory of the epsilon recovered at
    level ``L-1`` (level 0 being the input ``eps``).  ``candidate_menus`` is a
    list of menus, one per level; the last one is reused for deeper levels.
    Recursion stops at ``depth`` or when a level is judged autonomous.
    """
    from .detection import SelectionConfig, analyze_level

    if int(depth) != depth or depth < 1:
        raise ValueError("depth must be a positive integer")
    if not candidate_menus:
        raise ValueError("at least one candidate menu is required")
    if config is None:
        config = SelectionConfig()
    root = None
    parent = None
    current = eps
    for level in range(1, int(depth) + 1):
        lifted = lift_epsilon(current)
        menu = candidate_menus[min(level - 1, len(candidate_menus) - 1)]
        verdict, ranking = analyze_level(lifted, menu, config)
        best_eps = None
        if ranking is not None and ranking.best is not None and ranking.best.epsilon is not None:
            best_eps = ranking.best.epsilon
        node = UnravelLevel(level, verdict, ranking, best_eps)
        if root is None:
            root = node
        else:
            parent.child = node
        parent = node
        if verdict.verdict == "autonomous" or best_eps is None:
            break
        current = best_eps
    return root
