import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from igame import (EpsilonRepresentation, FilterBasis, FockSpace, HamiltonianSpec, TimeGrid,
                   Trajectory, ControlSignal, additive, build_hamiltonian, evolve_slow,
                   identity_filtration, ladder_operators, number_operators,
                   quick_time_coefficients)
from igame.errors import DimensionMismatch, NonHermitianSpec


def random_state(space, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(space.dim) + 1j * rng.standard_normal(space.dim)
    from igame import QuantumState
    return QuantumState(space, c / np.linalg.norm(c))


def test_ladder_examples():
    space = FockSpace(1, 3)
    (a,), (ad,) = ladder_operators(space)
    one, two, three = (space.basis_state((n,)).coefficients for n in (1, 2, 3))
    assert np.allclose(a @ one, space.vacuum().coefficients, atol=0)
    assert np.allclose(ad @ one, np.sqrt(2) * two, atol=1e-15)
    assert np.all(ad @ three == 0)
    assert np.all(a @ space.vacuum().coefficients == 0)
    assert np.array_equal(ad.toarray(), a.toarray().conj().T)


@pytest.mark.parametrize("modes,cutoff", [(1, 6), (2, 4), (3, 2)])
def test_commutators_off_the_truncation_boundary(modes, cutoff):
    space = FockSpace(modes, cutoff)
    ann, cre = ladder_operators(space)
    inside = np.all(space.occupations < cutoff, axis=1)
    for i in range(modes):
        for j in range(modes):
            comm = (ann[i].matrix @ cre[j].matrix - cre[j].matrix @ ann[i].matrix).toarray()
            expected = np.eye(space.dim) if i == j else np.zeros((space.dim, space.dim))
            assert np.max(np.abs((comm - expected)[np.ix_(inside, inside)])) <= 1e-12
            same = (ann[i].matrix @ ann[j].matrix - ann[j].matrix @ ann[i].matrix)
            assert same.count_nonzero() == 0


def test_number_operator_is_diagonal_occupation():
    space = FockSpace(2, 3)
    ann, cre = ladder_operators(space)
    for a, N in enumerate(number_operators(space)):
        assert np.array_equal(np.diag(N.toarray()).real, space.occupations[:, a])
        assert np.allclose((cre[a] @ ann[a]).toarray(), N.toarray(), atol=1e-14)
    H = build_hamiltonian(HamiltonianSpec(np.diag([1.0, 0.0])), space)
    assert np.allclose(H.toarray(), number_operators(space)[0].toarray(), atol=1e-14)


def test_hamiltonian_spec_errors():
    space = FockSpace(2, 2)
    zero = build_hamiltonian(HamiltonianSpec(np.zeros((2, 2))), space)
    assert zero.matrix.nnz == 0
    with pytest.raises(NonHermitianSpec):
        HamiltonianSpec([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(NonHermitianSpec):
        HamiltonianSpec(np.zeros((1, 1)), np.full((1, 1, 1), 1j))
    with pytest.raises(DimensionMismatch):
        build_hamiltonian(HamiltonianSpec(np.zeros((3, 3))), space)


def test_zero_duration_is_an_exact_copy():
    space = FockSpace(2, 3)
    psi = random_state(space, 0)
    H = build_hamiltonian(HamiltonianSpec([[1.0, 0.3], [0.3, -0.5]]), space)
    out = evolve_slow(psi, H, 0.0)
    assert np.array_equal(out.coefficients, psi.coefficients)
    assert out.coefficients is not psi.coefficients


def test_number_state_picks_up_its_phase():
    space = FockSpace(1, 4)
    H = build_hamiltonian(HamiltonianSpec([[1.0]]), space)
    tau = 0.73
    out = evolve_slow(space.basis_state((2,)), H, tau)
    expected = np.zeros(space.dim, dtype=complex)
    expected[2] = np.exp(-2j * tau)
    assert np.max(np.abs(out.coefficients - expected)) < 1e-12


def _spec(m, seed, vertex):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    g = rng.standard_normal((m, m, m)) * 0.3 if vertex else None
    return HamiltonianSpec((w + w.conj().T) / 2, g)


@settings(max_examples=15, deadline=None)
@given(m=st.integers(1, 3), seed=st.integers(0, 10 ** 6), vertex=st.booleans(),
       tau=st.floats(0.01, 2.0))
def test_evolution_matches_dense_eigendecomposition(m, seed, vertex, tau):
    space = FockSpace(m, 3)
    H = build_hamiltonian(_spec(m, seed, vertex), space)
    psi = random_state(space, seed + 1)
    vals, vecs = scipy.linalg.eigh(H.toarray())
    oracle = vecs @ (np.exp(-1j * tau * vals) * (vecs.conj().T @ psi.coefficients))
    out = evolve_slow(psi, H, tau)
    assert np.max(np.abs(out.coefficients - oracle)) < 1e-9
    assert abs(out.norm - 1.0) < 1e-10


@settings(max_examples=15, deadline=None)
@given(m=st.integers(1, 4), seed=st.integers(0, 10 ** 6), t1=st.floats(0.0, 1.5),
       t2=st.floats(0.0, 1.5))
def test_evolution_composes(m, seed, t1, t2):
    space = FockSpace(m, 3)
    assert space.dim <= 256
    H = build_hamiltonian(_spec(m, seed, True), space)
    psi = random_state(space, seed)
    two = evolve_slow(evolve_slow(psi, H, t1), H, t2)
    one = evolve_slow(psi, H, t1 + t2)
    assert np.max(np.abs(two.coefficients - one.coefficients)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6), tau=st.floats(0.0, 3.0))
def test_quadratic_hamiltonians_conserve_total_number(seed, tau):
    space = FockSpace(3, 3)
    H = build_hamiltonian(_spec(3, seed, False), space)
    total = sum(N.matrix for N in number_operators(space))
    psi = random_state(space, seed)
    out = evolve_slow(psi, H, tau)
    assert abs(out.expectation(total) - psi.expectation(total)) < 1e-9


def test_evolution_requires_a_hermitian_operator():
    from igame import QuantumOperator
    space = FockSpace(1, 2)
    ann, _ = ladder_operators(space)
    with pytest.raises(NonHermitianSpec):
        evolve_slow(space.vacuum(), ann[0], 1.0)
    with pytest.raises(NonHermitianSpec):
        QuantumOperator(ann[0].matrix, True)


def _game(eps):
    eps = np.asarray(eps, dtype=float)
    grid = TimeGrid(0.0, 0.1, len(eps) - 1)
    traj = Trajectory(grid, np.zeros((len(eps), 1)))
    rep = EpsilonRepresentation(additive(1, [eps.shape[1]]),
                                ControlSignal(grid, eps, "epsilon"), 0.0)
    return rep, traj


def test_quick_time_examples():
    basis = FilterBasis((identity_filtration("eps"),))
    rep, traj = _game(np.zeros((10, 1)))
    assert np.all(quick_time_coefficients(basis, rep, traj, 5).omega == 0)
    rep, traj = _game(np.full((10, 1), 1.5))
    assert quick_time_coefficients(basis, rep, traj, 5).omega[0, 0] == 2.25
    two = FilterBasis((identity_filtration("eps", ((1.0, 0.0),), name="e1"),
                       identity_filtration("eps", ((0.0, 1.0),), name="e2")))
    rep, traj = _game(np.tile([1.0, 2.0], (10, 1)))
    omega = quick_time_coefficients(two, rep, traj, 3).omega
    assert np.array_equal(omega.real, [[1.0, 2.0], [2.0, 4.0]])
