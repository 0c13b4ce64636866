"""Subject and desire pictures of one game and the transform between them.

In the subject picture the recorded controls ``u`` act on the state through
``Phi(phi, u)``.  The desire picture lets the desires ``v0`` (filtrations of
epsilon and the state) act instead: its interactive control is
``v = v0 + eps_dual`` and its dynamics ``Phi_dual(phi, v)``.  The transform
used here keeps ``Phi_dual = Phi`` and asks ``v`` to take the value of ``u``,
so the dual hidden parameter ``eps_dual = u - v0`` carries the subjects' part
of the control.  That part is expressed through a fitted map of the
subjects' pure controls and the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingForm, additive
from .dynamics import DynamicsModel, Expansion, monomial_dictionary
from .epsilon import DesireMap, extract_desires
from .errors import DimensionMismatch, InsufficientData, MissingInput
from .regression import thresholded_fit

PICTURE_ROLES = ("subjects", "desires")


class HiddenParameterMap:
    """Sum of expansions, each reading its own named input blocks.

    The first expansion is the map fitted by the transform; every agent added
    afterwards contributes one more additive expansion.
    """

    def __init__(self, parts, residual=0.0):
        self.parts = tuple(parts)
        if not self.parts:
            raise ValueError("a hidden-parameter map needs at least one expansion")
        n_out = {p.n_out for p in self.parts}
        if len(n_out) != 1:
            raise DimensionMismatch("all parts of a hidden-parameter map need the same output dim")
        self.residual = float(residual)

    @property
    def n_out(self):
        return self.parts[0].n_out

    @property
    def input_names(self):
        names = []
        for p in self.parts:
            names.extend(n for n, _ in p.inputs if n not in names)
        return names

    def __call__(self, **blocks):
        total = None
        for p in self.parts:
            missing = [n for n, _ in p.inputs if n not in blocks]
            if missing:
                raise MissingInput(f"hidden-parameter map needs input(s) {missing}")
            val = p.evaluate(**{n: blocks[n] for n, _ in p.inputs})
            total = val if total is None else total + val
        return total

    def extended(self, part):
        if part.n_out != self.n_out:
            raise DimensionMismatch(
                f"new term has {part.n_out} outputs, the hidden parameter has {self.n_out}")
        return HiddenParameterMap(self.parts + (part,), self.residual)

    def __eq__(self, other):
        return (isinstance(other, HiddenParameterMap) and self.parts == other.parts
                and self.residual == other.residual)

    def to_json(self):
        from .serialize import expansion_to_json
        return {"type": "hidden_parameter_map", "residual": self.residual,
                "parts": [expansion_to_json(p) for p in self.parts]}

    @classmethod
    def from_json(cls, d):
        from .serialize import expansion_from_json
        return cls([expansion_from_json(p) for p in d["parts"]], d.get("residual", 0.0))


@dataclass(frozen=True, eq=False)
class PictureModel:
    dynamics: DynamicsModel
    couplings: CouplingForm
    role: str
    hidden_parameter_map: object = None
    desire_specs: tuple = ()

    def __post_init__(self):
        if self.role not in PICTURE_ROLES:
            raise ValueError(f"unknown picture role {self.role!r}")
        if self.couplings.state_dim != self.dynamics.state_dim:
            raise DimensionMismatch("coupling and dynamics disagree on the state dimension")
        if self.couplings.control_dim != self.dynamics.control_dim:
            raise DimensionMismatch("coupling and dynamics disagree on the control dimension")
        object.__setattr__(self, "desire_specs", tuple(self.desire_specs))

    @property
    def state_dim(self):
        return self.dynamics.state_dim

    def rhs(self, states, controls):
        return self.dynamics.rhs(states, controls)

    def hidden_parameters(self, **blocks):
        if self.hidden_parameter_map is None:
            raise MissingInput("picture has no hidden-parameter map")
        return self.hidden_parameter_map(**blocks)

    def replay_controls(self, pure, **blocks):
        """Interactive controls rebuilt from pure controls and the hidden map."""
        phi = blocks["phi"]
        return self.couplings.apply(phi, pure, self.hidden_parameters(**blocks))

    def to_json(self):
        from .serialize import to_json
        hmap = self.hidden_parameter_map
        return {
            "type": "picture",
            "role": self.role,
            "dynamics": to_json(self.dynamics),
            "couplings": to_json(self.couplings),
            "hidden_parameter_map": None if hmap is None else hmap.to_json(),
            "desire_specs": [s.to_json() for s in self.desire_specs],
        }

    @classmethod
    def from_json(cls, d):
        from .filters import FiltrationSpec
        from .serialize import from_json
        h = d.get("hidden_parameter_map")
        if h is None:
            hmap = None
        elif h.get("type") == "desire_map":
            hmap = DesireMap.from_json(h)
        else:
            hmap = HiddenParameterMap.from_json(h)
        return cls(from_json(d["dynamics"]), from_json(d["couplings"]), d["role"], hmap,
                   tuple(FiltrationSpec.from_json(s) for s in d.get("desire_specs", [])))


@dataclass(eq=False)
class SDPair:
    s_picture: PictureModel
    d_picture: PictureModel
    consistency_residual: float = float("nan")

    def __post_init__(self):
        if self.s_picture.state_dim != self.d_picture.state_dim:
            raise DimensionMismatch("both pictures must share the state dimension")

    def to_json(self):
        return {"type": "sd_pair", "s_picture": self.s_picture.to_json(),
                "d_picture": self.d_picture.to_json(),
                "consistency_residual": self.consistency_residual}

    @classmethod
    def from_json(cls, d):
        return cls(PictureModel.from_json(d["s_picture"]), PictureModel.from_json(d["d_picture"]),
                   float(d.get("consistency_residual", float("nan"))))


def _values(x):
    return getattr(x, "values", x)


def _relabel(model):
    """Same coefficients, read as a function of the desire controls."""
    return DynamicsModel(model.state_dim, model.control_dim, model.terms, model.coefficients)


def sd_transform(s, desire_channels, eps, traj, u_pure, dictionary=None, ridge=0.0, degree=1):
    """Build the desire picture of the subject picture ``s``.

    ``desire_channels`` are filtrations of epsilon and the state; their total
    output dimension must equal the subjects' control dimension, since the
    desire controls take the place of ``u`` in the dynamics.  The map
    ``eps_dual = map(u0, phi)`` is fitted by least squares on ``traj`` with
    monomials of total degree <= ``degree`` unless ``dictionary`` is given.
    """
    if s.role != "subjects":
        raise ValueError("the transform starts from a subject picture")
    desire_channels = tuple(desire_channels)
    if not desire_channels:
        raise MissingInput("a desire picture needs at least one acting desire")
    if traj.controls is None:
        raise InsufficientData("the transform needs recorded controls")
    desires = extract_desires(desire_channels, eps, traj)
    v0 = np.hstack([d.values for d in desires])
    k = s.dynamics.control_dim
    if v0.shape[1] != k:
        raise DimensionMismatch(
            f"desires have total dimension {v0.shape[1]}, the subjects' controls {k}")
    u = traj.controls
    u0 = _values(u_pure)
    if u0.shape != u.shape:
        raise DimensionMismatch("pure controls must match the recorded controls")
    target = u - v0
    phi = traj.states
    inputs = (("u0", k), ("phi", traj.state_dim))
    terms = dictionary if dictionary is not None else monomial_dictionary(k + traj.state_dim,
                                                                          degree)
    if traj.grid.n_nodes < len(terms):
        raise InsufficientData(
            f"{traj.grid.n_nodes} nodes cannot determine {len(terms)} map coefficients")
    skeleton = Expansion.zero(terms, k, inputs)
    X = skeleton.features(np.hstack([u0, phi]))
    coef, _ = thresholded_fit(X, target, ridge, 0.0)
    fitted = skeleton.with_coefficients(coef.T)
    misfit = target - X @ coef
    residual = float(np.max(np.abs(misfit))) if misfit.size else 0.0
    hmap = HiddenParameterMap([fitted], residual)
    return PictureModel(_relabel(s.dynamics), additive(traj.state_dim, [k]), "desires", hmap,
                        desire_channels)


def desire_controls(d, eps, traj, **blocks):
    """Replay ``v = v0 + eps_dual`` of a desire picture on ``traj``."""
    if d.role != "desires":
        raise ValueError("not a desire picture")
    desires = extract_desires(d.desire_specs, eps, traj)
    v0 = np.hstack([x.values for x in desires])
    blocks = dict(blocks)
    blocks.setdefault("phi", traj.states)
    return d.replay_controls(v0, **blocks)


def sd_consistency(pair, traj, u, v):
    """Max over nodes of ``|Phi(phi, u) - Phi_dual(phi, v)|``; stored on ``pair``."""
    u = np.asarray(_values(u), dtype=float)
    v = np.asarray(_values(v), dtype=float)
    n = traj.grid.n_nodes
    s, d = pair.s_picture, pair.d_picture
    if u.shape != (n, s.dynamics.control_dim):
        raise DimensionMismatch(f"u must have shape {(n, s.dynamics.control_dim)}, got {u.shape}")
    if v.shape != (n, d.dynamics.control_dim):
        raise DimensionMismatch(f"v must have shape {(n, d.dynamics.control_dim)}, got {v.shape}")
    if traj.state_dim != s.state_dim:
        raise DimensionMismatch("trajectory state dimension does not match the pictures")
    diff = s.rhs(traj.states, u) - d.rhs(traj.states, v)
    res = float(np.max(np.linalg.norm(diff, axis=1))) if diff.size else 0.0
    pair.consistency_residual = res
    return res


def add_agent(d, new_agent_term):
    """Desire picture with one more additive term in its hidden-parameter map.

    Dynamics and couplings are carried over as the very same objects.
    """
    if d.role != "desires":
        raise ValueError("agents are added to a desire picture")
    hmap = d.hidden_parameter_map
    if not isinstance(hmap, HiddenParameterMap):
        raise DimensionMismatch("desire picture has no additive hidden-parameter map")
    if new_agent_term.n_out != d.couplings.eps_dim:
        raise DimensionMismatch(
            f"new term has {new_agent_term.n_out} outputs, eps_dual has {d.couplings.eps_dim}")
    return PictureModel(d.dynamics, d.couplings, d.role, hmap.extended(new_agent_term),
                        d.desire_specs)
