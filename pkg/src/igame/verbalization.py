"""Segment-level summaries of a game history and their recursions.

A history is cut a posteriori into segments by penalized change-point
detection on a driver signal.  Each segment is summarized by a word (a
vector of functionals of epsilon, the state or the pure controls, optionally
quantized against a codebook).  A word sequence is verbalizable when an
affine recursion in the previous word, the segment's tactic and a few
segment state features reproduces it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (EmptyCodebook, InsufficientData, LengthMismatch, MissingInput,
                     MixedRepresentation)
from .regression import ridge_solve

RECIPES = ("mean", "integral", "terminal", "total_variation")
WORD_SOURCES = ("eps", "phi", "u0")


@dataclass(frozen=True)
class Partition:
    """Breakpoint node indices ``0 = b_0 < ... < b_n = n_steps``.

    Segment ``i`` spans nodes ``b_i..b_{i+1}`` (both ends included when
    words are computed).
    """

    breakpoints: tuple
    min_len: int = 2

    def __post_init__(self):
        bp = tuple(int(b) for b in self.breakpoints)
        if len(bp) < 2 or bp[0] != 0:
            raise ValueError("a partition starts at node 0 and has at least one segment")
        if any(b - a < self.min_len for a, b in zip(bp, bp[1:])):
            raise ValueError(f"every segment must span at least {self.min_len} steps")
        object.__setattr__(self, "breakpoints", bp)

    @property
    def n_segments(self):
        return len(self.breakpoints) - 1

    def segments(self):
        return list(zip(self.breakpoints[:-1], self.breakpoints[1:]))

    def to_json(self):
        return {"breakpoints": list(self.breakpoints), "min_len": self.min_len}


def _values(x, name="u"):
    if hasattr(x, "states") and name == "phi":
        return x.states
    if hasattr(x, "epsilon"):
        return x.epsilon.values
    return np.asarray(getattr(x, "values", x), dtype=float)


def _segment_cost_table(y):
    """Prefix sums for O(1) within-segment squared deviation."""
    z = np.vstack([np.zeros((1, y.shape[1])), np.cumsum(y, axis=0)])
    z2 = np.concatenate([[0.0], np.cumsum(np.sum(y * y, axis=1))])
    return z, z2


def partition_cost(driver, breakpoints, penalty):
    """Objective minimized by ``segment_trajectory`` for a given partition."""
    y = np.asarray(_values(driver), dtype=float).reshape(len(_values(driver)), -1)
    n = y.shape[0] - 1
    total = 0.0
    bp = list(breakpoints)
    for i, (a, b) in enumerate(zip(bp[:-1], bp[1:])):
        stop = b + 1 if b == n else b
        seg = y[a:stop]
        total += float(np.sum((seg - seg.mean(axis=0)) ** 2))
    return total + penalty * (len(bp) - 2)


def segment_trajectory(traj, driver, penalty, min_len=2):
    """Exact penalized least-squares change-point segmentation.

    Segments are half-open node ranges ``[b_i, b_{i+1})`` except the last,
    which also holds node ``n_steps``.  Each spans ``>= min_len`` steps.  The
    cost is the within-segment squared deviation of the driver from its
    segment mean plus ``penalty`` per interior breakpoint; dynamic
    programming over breakpoint positions finds the optimum (ties go to the
    earliest previous breakpoint).
    """
    if int(min_len) != min_len or min_len < 2:
        raise ValueError("min_len must be an integer >= 2")
    if not penalty > 0:
        raise ValueError("penalty must be positive")
    y = np.asarray(_values(driver), dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n_nodes = traj.grid.n_nodes
    if y.shape[0] != n_nodes:
        raise LengthMismatch("driver must share the trajectory grid")
    if n_nodes < 2 * min_len:
        raise InsufficientData(f"{n_nodes} nodes cannot hold two segments of {min_len} steps")
    n = n_nodes - 1
    z, z2 = _segment_cost_table(y)

    def cost(starts, stop):
        cnt = (stop - starts)[:, None]
        s1 = z[stop] - z[starts]
        return z2[stop] - z2[starts] - np.sum(s1 * s1, axis=1) / cnt[:, 0]

    best = np.full(n + 1, np.inf)
    prev = np.full(n + 1, -1, dtype=int)
    best[0] = 0.0
    # interior breakpoints b leave >= min_len steps for the final segment
    for b in range(min_len, n - min_len + 1):
        starts = np.arange(0, b - min_len + 1)
        cand = best[starts] + cost(starts, b) + penalty
        j = int(np.argmin(cand))
        best[b], prev[b] = cand[j], starts[j]
    starts = np.arange(0, n - min_len + 1)
    final = best[starts] + cost(starts, n + 1)
    j = int(np.argmin(final))
    bps = [n]
    a = int(starts[j])
    while a > 0:
        bps.append(a)
        a = int(prev[a])
    bps.append(0)
    return Partition(tuple(reversed(bps)), int(min_len))


@dataclass(frozen=True)
class SegmentFunctionalSpec:
    """Per-output recipes ``(recipe, source, columns)``.

    ``columns`` selects columns of the source (``None`` for all).  An
    optional ``codebook`` (list of centroid vectors) quantizes each word to
    the index of its nearest centroid.
    """

    recipes: tuple
    codebook: tuple | None = None

    def __post_init__(self):
        recipes = []
        for r in self.recipes:
            r = tuple(r)
            kind, source = r[0], r[1]
            cols = r[2] if len(r) > 2 else None
            if kind not in RECIPES:
                raise ValueError(f"unknown recipe {kind!r}")
            if source not in WORD_SOURCES:
                raise ValueError(f"unknown word source {source!r}")
            cols = None if cols is None else tuple(int(c) for c in np.atleast_1d(cols))
            recipes.append((kind, source, cols))
        if not recipes:
            raise ValueError("a word spec needs at least one recipe")
        object.__setattr__(self, "recipes", tuple(recipes))
        if self.codebook is not None:
            cb = tuple(tuple(float(v) for v in np.atleast_1d(c)) for c in self.codebook)
            if not cb:
                raise EmptyCodebook("codebook is empty")
            object.__setattr__(self, "codebook", cb)

    @property
    def sources(self):
        return sorted({s for _, s, _ in self.recipes})

    def to_json(self):
        return {"recipes": [[k, s, None if c is None else list(c)] for k, s, c in self.recipes],
                "codebook": None if self.codebook is None else [list(c) for c in self.codebook]}

    @classmethod
    def from_json(cls, d):
        return cls(tuple(tuple(r) for r in d["recipes"]), d.get("codebook"))


@dataclass(frozen=True)
class WordSequence:
    values: np.ndarray | None
    codes: np.ndarray | None
    source: str = "S"

    def __post_init__(self):
        if self.source not in ("S", "D"):
            raise ValueError("source must be 'S' or 'D'")
        if (self.values is None) == (self.codes is None):
            raise ValueError("a word sequence holds either values or codes")

    @property
    def quantized(self):
        return self.codes is not None

    def __len__(self):
        return len(self.codes if self.quantized else self.values)

    @property
    def dim(self):
        return 1 if self.quantized else self.values.shape[1]

    def as_array(self):
        if self.quantized:
            return np.asarray(self.codes, dtype=float)[:, None]
        return np.asarray(self.values, dtype=float)

    def to_json(self):
        if self.quantized:
            return {"source": self.source, "codes": [int(c) for c in self.codes]}
        return {"source": self.source, "values": [[float(v) for v in w] for w in self.values]}


def _segment_value(kind, x, a, b, dt):
    seg = x[a:b + 1]
    if kind == "mean":
        return seg.mean(axis=0)
    if kind == "integral":
        return dt * (seg.sum(axis=0) - 0.5 * (seg[0] + seg[-1]))
    if kind == "terminal":
        return seg[-1]
    return np.abs(np.diff(seg, axis=0)).sum(axis=0)


def nearest_centroid(words, codebook):
    """Index of the nearest centroid per row; ties go to the lowest index."""
    cb = np.asarray(codebook, dtype=float)
    if cb.size == 0:
        raise EmptyCodebook("codebook is empty")
    cb = cb.reshape(len(codebook), -1)
    if cb.shape[1] != words.shape[1]:
        raise ValueError(f"codebook vectors have dim {cb.shape[1]}, words have {words.shape[1]}")
    d2 = np.sum((words[:, None, :] - cb[None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1)


def compute_words(spec, partition, series, dt=1.0, source="S"):
    """Apply every recipe of ``spec`` on each (closed) segment of the partition.

    ``series`` maps source names (``eps``, ``phi``, ``u0``) to node series.
    ``dt`` is the grid step used by the integral recipe.
    """
    n_end = partition.breakpoints[-1]
    cols = []
    for kind, src, sel in spec.recipes:
        if src not in series or series[src] is None:
            raise MissingInput(f"word source {src!r} not provided")
        x = np.asarray(_values(series[src], src), dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != n_end + 1:
            raise LengthMismatch(f"series {src!r} does not cover the partition")
        if sel is not None:
            x = x[:, list(sel)]
        cols.append(np.array([_segment_value(kind, x, a, b, dt)
                              for a, b in partition.segments()]))
    values = np.hstack(cols)
    if spec.codebook is not None:
        return WordSequence(None, nearest_centroid(values, spec.codebook), source)
    return WordSequence(values, None, source)


def segment_state_features(traj, partition):
    """Per segment: mean state over its nodes and its duration."""
    dt = traj.grid.dt
    feats = [np.concatenate([traj.states[a:b + 1].mean(axis=0), [(b - a) * dt]])
             for a, b in partition.segments()]
    return np.array(feats)


@dataclass(frozen=True)
class RecursionModel:
    """``w_n = A w_{n-1} + B t_n + C s_n + c`` with per-segment residuals."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    c: np.ndarray
    residuals: np.ndarray
    tolerance: float

    @property
    def max_residual(self):
        return float(np.max(self.residuals, initial=0.0))

    @property
    def verbalizable(self):
        return self.max_residual <= self.tolerance

    def predict(self, prev_word, tactic, state_features):
        return (self.A @ np.atleast_1d(prev_word) + self.B @ np.atleast_1d(tactic)
                + self.C @ np.atleast_1d(state_features) + self.c)

    def to_json(self):
        mat = lambda m: [[float(v) for v in row] for row in np.atleast_2d(m)]
        return {"A": mat(self.A), "B": mat(self.B), "C": mat(self.C),
                "c": [float(v) for v in self.c],
                "residuals": [float(r) for r in self.residuals],
                "max_residual": self.max_residual, "tolerance": self.tolerance,
                "verbalizable": self.verbalizable}


def fit_recursion(words, tactics, state_features, ridge=0.0, tolerance=1e-9):
    """Least-squares affine recursion over segments ``2..n``.

    Residuals are Euclidean norms of the misfit per fitted segment.
    """
    W = words.as_array() if isinstance(words, WordSequence) else np.atleast_2d(words)
    T = tactics.as_array() if isinstance(tactics, WordSequence) else np.asarray(tactics)
    S = np.asarray(state_features, dtype=float)
    T = T.reshape(len(T), -1)
    S = S.reshape(len(S), -1)
    if not (len(W) == len(T) == len(S)):
        raise LengthMismatch("words, tactics and state features must have equal lengths")
    if len(W) < 2:
        raise InsufficientData("a recursion needs at least two segments")
    if not tolerance >= 0:
        raise ValueError("tolerance must be >= 0")
    X = np.hstack([W[:-1], T[1:], S[1:], np.ones((len(W) - 1, 1))])
    Y = W[1:]
    coef = ridge_solve(X, Y, ridge)
    misfit = Y - X @ coef
    residuals = np.linalg.norm(misfit, axis=1)
    dw, dt_, ds = W.shape[1], T.shape[1], S.shape[1]
    M = coef.T
    return RecursionModel(M[:, :dw], M[:, dw:dw + dt_], M[:, dw + dt_:dw + dt_ + ds],
                          M[:, -1], residuals, float(tolerance))


class Synlinguism(NamedTuple):
    flag: bool
    first_mismatch: int | None
    deviations: np.ndarray


def check_synlinguism(words_s, words_d, tolerance=1e-9):
    """Compare two word sequences segment by segment (indices from 0)."""
    if words_s.quantized != words_d.quantized:
        raise MixedRepresentation("cannot compare quantized with continuous words")
    if len(words_s) != len(words_d) or words_s.dim != words_d.dim:
        raise LengthMismatch("word sequences differ in length or dimension")
    if not tolerance >= 0:
        raise ValueError("tolerance must be >= 0")
    if words_s.quantized:
        dev = (np.asarray(words_s.codes) != np.asarray(words_d.codes)).astype(float)
        bad = dev > 0
    else:
        dev = np.max(np.abs(words_s.values - words_d.values), axis=1, initial=0.0)
        bad = ~(dev <= tolerance)
    first = int(np.argmax(bad)) if bad.any() else None
    return Synlinguism(first is None, first, dev)
