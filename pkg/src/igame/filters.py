"""Finite-memory filtrations built from primitive causal filters.

All primitives are trailing (causal): the output at node ``k`` depends only on
inputs at nodes ``<= k``.  Windows are truncated at the start of the series so
output length always equals input length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .dynamics import ControlSignal, Trajectory
from .errors import DimensionMismatch, MissingInput

PRIMITIVES = ("moving_average", "exponential_smoothing", "finite_difference", "median", "dead_band")
SOURCES = ("u", "phi", "eps")
LINEAR = frozenset({"moving_average", "exponential_smoothing", "finite_difference"})


@dataclass(frozen=True)
class Primitive:
    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in PRIMITIVES:
            raise ValueError(f"unknown filter primitive {self.kind!r}")
        if self.kind in ("moving_average", "median"):
            if self.param is None or int(self.param) != self.param or self.param < 1:
                raise ValueError(f"{self.kind} window must be an integer >= 1")
            object.__setattr__(self, "param", int(self.param))
        elif self.kind == "exponential_smoothing":
            if self.param is None or not 0 < self.param <= 1:
                raise ValueError("smoothing rate must lie in (0, 1]")
            object.__setattr__(self, "param", float(self.param))
        elif self.kind == "dead_band":
            if self.param is None or not self.param >= 0:
                raise ValueError("dead band threshold must be >= 0")
            object.__setattr__(self, "param", float(self.param))
        elif self.param is not None:
            raise ValueError("finite_difference takes no parameter")

    def __call__(self, x):
        if self.kind == "moving_average":
            return _moving_average(x, self.param)
        if self.kind == "exponential_smoothing":
            lam = self.param
            zi = (1.0 - lam) * x[:1]
            y, _ = lfilter([lam], [1.0, -(1.0 - lam)], x, axis=0, zi=zi)
            return y
        if self.kind == "finite_difference":
            y = np.zeros_like(x)
            y[1:] = x[1:] - x[:-1]
            return y
        if self.kind == "median":
            return _trailing_median(x, self.param)
        return np.where(np.abs(x) > self.param, x, 0.0)

    @property
    def memoryless(self):
        """True when the output at a node depends on that node only."""
        if self.kind == "dead_band":
            return True
        return self.kind in ("moving_average", "median", "exponential_smoothing") \
            and self.param == 1

    def pointwise(self, x):
        """Evaluate a memoryless primitive on values of any shape."""
        if not self.memoryless:
            raise ValueError(f"{self.kind} has memory")
        if self.kind == "dead_band":
            return np.where(np.abs(x) > self.param, x, 0.0)
        return x

    def to_json(self):
        return {"kind": self.kind} if self.param is None else {"kind": self.kind, "param": self.param}

    @classmethod
    def from_json(cls, d):
        return cls(d["kind"], d.get("param"))


# shorthand constructors
def moving_average(w):
    return Primitive("moving_average", w)


def exponential_smoothing(rate):
    return Primitive("exponential_smoothing", rate)


def finite_difference():
    return Primitive("finite_difference")


def median(w):
    return Primitive("median", w)


def dead_band(threshold):
    return Primitive("dead_band", threshold)


def _moving_average(x, w):
    if w == 1:
        return np.array(x, dtype=float)
    sums = lfilter(np.ones(w), [1.0], x, axis=0)
    counts = np.minimum(np.arange(1, x.shape[0] + 1), w)
    return sums / counts[:, None]


def _trailing_median(x, w):
    n = x.shape[0]
    out = np.empty_like(x)
    head = min(w - 1, n)
    for k in range(head):
        out[k] = np.median(x[:k + 1], axis=0)
    if n >= w:
        out[w - 1:] = np.median(sliding_window_view(x, w, axis=0), axis=-1)
    return out


@dataclass(frozen=True)
class FiltrationSpec:
    """A pipeline of primitives fed by a selection of named signals.

    ``inputs`` names the sources whose columns are concatenated (``u``,
    ``phi`` or ``eps``).  ``weights``, when given, projects the concatenated
    columns linearly (shape ``out x in``) before the pipeline runs.
    """

    pipeline: tuple
    inputs: tuple = ("u",)
    weights: tuple | None = None
    name: str = ""

    def __post_init__(self):
        pipeline = tuple(p if isinstance(p, Primitive) else Primitive.from_json(p)
                         for p in self.pipeline)
        if not pipeline:
            raise ValueError("filtration pipeline must be non-empty")
        object.__setattr__(self, "pipeline", pipeline)
        inputs = (self.inputs,) if isinstance(self.inputs, str) else tuple(self.inputs)
        for src in inputs:
            if src not in SOURCES:
                raise ValueError(f"unknown filtration input {src!r}")
        if not inputs:
            raise ValueError("filtration needs at least one input")
        object.__setattr__(self, "inputs", inputs)
        if self.weights is not None:
            w = tuple(tuple(float(v) for v in row) for row in np.atleast_2d(self.weights))
            object.__setattr__(self, "weights", w)

    @property
    def is_linear(self):
        return all(p.kind in LINEAR for p in self.pipeline)

    @property
    def is_memoryless(self):
        return all(p.memoryless for p in self.pipeline)

    def pointwise(self, x):
        """Evaluate a memoryless pipeline on stacked input columns ``(..., in)``."""
        x = np.asarray(x, dtype=float)
        if self.weights is not None:
            x = x @ np.asarray(self.weights).T
        for prim in self.pipeline:
            x = prim.pointwise(x)
        return x

    @property
    def role(self):
        return "desire" if "eps" in self.inputs else "pure"

    def to_json(self):
        d = {"pipeline": [p.to_json() for p in self.pipeline], "inputs": list(self.inputs)}
        if self.weights is not None:
            d["weights"] = [list(r) for r in self.weights]
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_json(cls, d):
        return cls(tuple(Primitive.from_json(p) for p in d["pipeline"]),
                   tuple(d.get("inputs", ["u"])), d.get("weights"), d.get("name", ""))


def _as_series(obj, name):
    if isinstance(obj, Trajectory):
        return obj.grid, obj.states if name != "u" else obj.controls
    if isinstance(obj, ControlSignal):
        return obj.grid, obj.values
    return None, np.asarray(obj, dtype=float)


def apply_filtration(spec, signals):
    """Run ``spec`` on ``signals`` (mapping source name -> series).

    Series may be ControlSignal, Trajectory (states are used for ``phi``) or
    plain arrays of shape ``(n+1, dim)``.  Returns a ControlSignal tagged
    ``pure``, or ``desire`` when epsilon feeds the pipeline.
    """
    grid = None
    cols = []
    for src in spec.inputs:
        if src not in signals or signals[src] is None:
            raise MissingInput(f"filtration input {src!r} not provided")
        g, arr = _as_series(signals[src], src)
        if arr is None:
            raise MissingInput(f"filtration input {src!r} has no data")
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if g is not None:
            if grid is not None and g != grid:
                raise DimensionMismatch("filtration inputs live on different grids")
            grid = g
        if cols and arr.shape[0] != cols[0].shape[0]:
            raise DimensionMismatch("filtration inputs have different lengths")
        cols.append(arr)
    x = np.concatenate(cols, axis=1)
    if spec.weights is not None:
        W = np.asarray(spec.weights)
        if W.shape[1] != x.shape[1]:
            raise DimensionMismatch(
                f"filtration weights expect {W.shape[1]} input columns, got {x.shape[1]}")
        x = x @ W.T
    for prim in spec.pipeline:
        x = prim(x)
    if grid is None:
        from .dynamics import TimeGrid
        grid = TimeGrid(0.0, 1.0, x.shape[0] - 1)
    return ControlSignal(grid, x, spec.role)


def identity_filtration(source="u", weights=None, name=""):
    return FiltrationSpec((moving_average(1),), (source,), weights, name)
