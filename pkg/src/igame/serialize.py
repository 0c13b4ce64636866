"""JSON schema for models, couplings, filtrations, goals and candidate menus.

Every object is a dict with a ``"type"`` tag.  Dictionary terms are stored as
exponent lists, coefficients as nested float lists; ``json`` writes floats
with ``repr`` so values round-trip bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .coupling import ChannelCoupling, CouplingForm
from .dynamics import DynamicsModel, Expansion
from .filters import FiltrationSpec
from .goals import GoalFunctional


def expansion_to_json(e):
    return {
        "type": "expansion",
        "inputs": [[n, d] for n, d in e.inputs],
        "terms": [list(t.exponents) for t in e.terms],
        "coefficients": [[float(c) for c in row] for row in e.coefficients],
    }


def expansion_from_json(d):
    n_terms = len(d["terms"])
    coef = np.array(d["coefficients"], dtype=float).reshape(-1, n_terms)
    return Expansion([tuple(t) for t in d["terms"]], coef, [tuple(x) for x in d["inputs"]])


def to_json(obj):
    if isinstance(obj, DynamicsModel):
        return {
            "type": "dynamics_model",
            "state_dim": obj.state_dim,
            "control_dim": obj.control_dim,
            "terms": [list(t.exponents) for t in obj.terms],
            "coefficients": [[float(c) for c in row] for row in obj.coefficients],
        }
    if isinstance(obj, Expansion):
        return expansion_to_json(obj)
    if isinstance(obj, FiltrationSpec):
        return {"type": "filtration", **obj.to_json()}
    if isinstance(obj, GoalFunctional):
        return {
            "type": "goal",
            "state_dim": obj.state_dim,
            "running": None if obj.running is None else expansion_to_json(obj.running),
            "terminal": None if obj.terminal is None else expansion_to_json(obj.terminal),
            "horizon": obj.horizon,
            "name": obj.name,
        }
    if isinstance(obj, CouplingForm):
        return {
            "type": "coupling",
            "state_dim": obj.state_dim,
            "channels": [
                {"control_dim": ch.control_dim, "eps_dim": ch.eps_dim,
                 "A": expansion_to_json(ch.A), "B": expansion_to_json(ch.B)}
                for ch in obj.channels
            ],
        }
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_json(d):
    kind = d.get("type")
    if kind == "dynamics_model":
        n_terms = len(d["terms"])
        coef = np.array(d["coefficients"], dtype=float).reshape(-1, n_terms)
        return DynamicsModel(d["state_dim"], d["control_dim"], [tuple(t) for t in d["terms"]], coef)
    if kind == "expansion":
        return expansion_from_json(d)
    if kind == "filtration":
        return FiltrationSpec.from_json(d)
    if kind == "goal":
        return GoalFunctional(
            d["state_dim"],
            None if d.get("running") is None else expansion_from_json(d["running"]),
            None if d.get("terminal") is None else expansion_from_json(d["terminal"]),
            d.get("horizon"), d.get("name", ""))
    if kind == "coupling":
        channels = [ChannelCoupling(expansion_from_json(c["A"]), expansion_from_json(c["B"]),
                                    c["control_dim"], c["eps_dim"]) for c in d["channels"]]
        return CouplingForm(channels, d["state_dim"])
    if kind == "candidate":
        from .detection import Candidate
        return Candidate.from_json(d)
    if kind == "scenario":
        from .scenarios import Scenario
        return Scenario.from_json(d)
    raise ValueError(f"unknown object type {kind!r}")


def dumps(obj, **kw):
    payload = obj if isinstance(obj, (dict, list)) else to_json(obj)
    return json.dumps(payload, indent=kw.pop("indent", 2), sort_keys=kw.pop("sort_keys", False),
                      allow_nan=kw.pop("allow_nan", True), **kw)


def loads(text):
    return from_json(json.loads(text))


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(payload))
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
