import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igame import (Partition, SegmentFunctionalSpec, TimeGrid, Trajectory, WordSequence,
                   check_synlinguism, compute_words, fit_recursion, segment_trajectory)
from igame.verbalization import partition_cost
from igame.errors import InsufficientData, LengthMismatch, MixedRepresentation


def traj_of(n_nodes, dt=0.1):
    grid = TimeGrid(0.0, dt, n_nodes - 1)
    return Trajectory(grid, np.zeros((n_nodes, 1)))


def test_constant_driver_gives_one_segment():
    p = segment_trajectory(traj_of(300), np.full(300, 2.5), penalty=1e-3)
    assert p.breakpoints == (0, 299)


def test_level_shifts_are_located_exactly():
    y = np.repeat([0.0, 5.0, 0.0, 5.0], 100)
    p = segment_trajectory(traj_of(400), y, penalty=1.0)
    assert p.breakpoints == (0, 100, 200, 300, 399)


def test_infinite_penalty_gives_one_segment():
    y = np.random.default_rng(0).standard_normal(200)
    assert segment_trajectory(traj_of(200), y, penalty=np.inf).n_segments == 1


def test_segmentation_errors():
    with pytest.raises(ValueError):
        segment_trajectory(traj_of(50), np.zeros(50), penalty=0.0)
    with pytest.raises(LengthMismatch):
        segment_trajectory(traj_of(50), np.zeros(49), penalty=1.0)
    with pytest.raises(InsufficientData):
        segment_trajectory(traj_of(5), np.zeros(5), penalty=1.0, min_len=3)


def plain_cost(y, bp, penalty):
    """Within-segment squared deviation; the final segment keeps the last node."""
    total = 0.0
    for a, b in zip(bp, bp[1:]):
        seg = y[a:b + 1] if b == len(y) - 1 else y[a:b]
        total += sum((v - sum(seg) / len(seg)) ** 2 for v in seg)
    return total + penalty * (len(bp) - 2)


def brute_force_cost(y, penalty, min_len):
    n = len(y) - 1
    best = np.inf
    interior = range(min_len, n - min_len + 1)
    for r in range(0, n // min_len):
        for cut in itertools.combinations(interior, r):
            bp = (0,) + cut + (n,)
            if all(b - a >= min_len for a, b in zip(bp, bp[1:])):
                best = min(best, plain_cost(y, bp, penalty))
    return best


@settings(max_examples=40, deadline=None)
@given(n_nodes=st.integers(5, 17), min_len=st.integers(2, 4),
       penalty=st.floats(0.01, 5.0), seed=st.integers(0, 10 ** 6))
def test_segmentation_matches_exhaustive_search(n_nodes, min_len, penalty, seed):
    if n_nodes < 2 * min_len:
        return
    rng = np.random.default_rng(seed)
    y = np.cumsum(rng.standard_normal(n_nodes))
    p = segment_trajectory(traj_of(n_nodes), y, penalty, min_len)
    oracle = brute_force_cost(y, penalty, min_len)
    found = plain_cost(y, p.breakpoints, penalty)
    assert abs(partition_cost(y, p.breakpoints, penalty) - found) <= 1e-9 * (1 + found)
    assert found <= oracle + 1e-9 * (1 + abs(oracle))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_segmentation_on_longer_grids_is_not_beaten_by_local_moves(seed):
    # exhaustive search is out of reach at 60 nodes; no single-breakpoint
    # insertion, removal or shift may lower the cost
    rng = np.random.default_rng(seed)
    y = np.repeat(rng.normal(0, 3, 4), 15) + rng.standard_normal(60)
    pen, m = 2.0, 3
    bp = list(segment_trajectory(traj_of(60), y, pen, m).breakpoints)
    best = plain_cost(y, bp, pen)
    n = 59
    moves = [sorted(set(bp) | {b}) for b in range(1, n)]
    moves += [bp[:i] + bp[i + 1:] for i in range(1, len(bp) - 1)]
    moves += [bp[:i] + [bp[i] + s] + bp[i + 1:] for i in range(1, len(bp) - 1) for s in (-1, 1)]
    for cand in moves:
        if all(b - a >= m for a, b in zip(cand, cand[1:])):
            assert plain_cost(y, cand, pen) >= best - 1e-9


def test_word_examples():
    p = Partition((0, 5, 10))
    mean = SegmentFunctionalSpec((("mean", "phi"),))
    words = compute_words(mean, p, {"phi": np.full(11, 3.25)})
    assert np.array_equal(words.values, [[3.25], [3.25]])
    t = np.linspace(0.0, 1.0, 11)
    term = compute_words(SegmentFunctionalSpec((("terminal", "phi"),)), p, {"phi": t})
    assert np.allclose(term.values[:, 0], [0.5, 1.0], atol=1e-15)
    coded = SegmentFunctionalSpec((("mean", "phi"),), codebook=((0.0,), (1.0,)))
    x = np.concatenate([np.full(5, 0.1), np.full(5, 0.9), np.full(6, 0.2)])
    w = compute_words(coded, Partition((0, 5, 10, 15)), {"phi": x})
    assert w.quantized and list(w.codes) == [0, 1, 0]


def test_integral_and_variation_words_against_loops():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(21)
    p = Partition((0, 7, 20))
    spec = SegmentFunctionalSpec((("integral", "eps"), ("total_variation", "eps")))
    w = compute_words(spec, p, {"eps": x}, dt=0.05).values
    for i, (a, b) in enumerate(p.segments()):
        trap = sum(0.05 * (x[j] + x[j + 1]) / 2 for j in range(a, b))
        tv = sum(abs(x[j + 1] - x[j]) for j in range(a, b))
        assert abs(w[i, 0] - trap) < 1e-12 and abs(w[i, 1] - tv) < 1e-12


@settings(max_examples=40, deadline=None)
@given(shift=st.floats(-100, 100), seed=st.integers(0, 10 ** 6))
def test_mean_words_shift_with_the_signal(shift, seed):
    x = np.random.default_rng(seed).standard_normal(31)
    p = Partition((0, 10, 20, 30))
    spec = SegmentFunctionalSpec((("mean", "phi"),))
    base = compute_words(spec, p, {"phi": x}).values
    moved = compute_words(spec, p, {"phi": x + shift}).values
    assert np.allclose(moved, base + shift, atol=1e-12 * (1 + abs(shift)))


def test_cumulative_words_have_unit_recursion():
    rng = np.random.default_rng(4)
    tactics = rng.standard_normal((12, 1))
    words = np.cumsum(tactics, axis=0)
    states = rng.standard_normal((12, 2))
    rec = fit_recursion(words, tactics, states)
    assert abs(rec.A[0, 0] - 1.0) < 1e-9 and abs(rec.B[0, 0] - 1.0) < 1e-9
    assert np.max(np.abs(rec.C)) < 1e-9 and abs(rec.c[0]) < 1e-9
    assert rec.verbalizable


def test_recursion_needs_two_segments_and_rejects_random_words():
    with pytest.raises(InsufficientData):
        fit_recursion(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    rng = np.random.default_rng(5)
    rec = fit_recursion(rng.standard_normal((12, 1)), rng.standard_normal((12, 1)),
                        rng.standard_normal((12, 2)), tolerance=1e-6)
    assert not rec.verbalizable


def words(vals, source="S"):
    return WordSequence(np.asarray(vals, dtype=float).reshape(len(vals), -1), None, source)


def test_synlinguism_examples():
    a = words([1.0, 2.0, 3.0, 4.0, 5.0])
    b = words([1.0, 2.0, 3.0, 4.5, 5.0], "D")
    assert check_synlinguism(a, a).flag
    res = check_synlinguism(a, b)
    assert res.flag is False and res.first_mismatch == 3
    back = check_synlinguism(b, a)
    assert back.flag == res.flag and back.first_mismatch == res.first_mismatch
    codes = WordSequence(None, np.array([0, 1, 0]), "D")
    with pytest.raises(MixedRepresentation):
        check_synlinguism(words([0.0, 1.0, 0.0]), codes)
    with pytest.raises(LengthMismatch):
        check_synlinguism(a, words([1.0, 2.0]))
    q1 = WordSequence(None, np.array([0, 1, 2]), "S")
    q2 = WordSequence(None, np.array([0, 1, 1]), "D")
    assert check_synlinguism(q1, q2).first_mismatch == 2


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), tol=st.floats(0, 1))
def test_synlinguism_is_symmetric(seed, tol):
    rng = np.random.default_rng(seed)
    a, b = words(rng.standard_normal(8)), words(rng.standard_normal(8), "D")
    f, g = check_synlinguism(a, b, tol), check_synlinguism(b, a, tol)
    assert (f.flag, f.first_mismatch) == (g.flag, g.first_mismatch)
