"""Quantized desires on a truncated bosonic Fock space.

Modes are indexed by a basis of filtrations.  Occupation-number states with
at most ``cutoff`` quanta per mode span the space; ladder operators are
sparse matrices with the usual square-root matrix elements, and raising the
top level gives zero.  Hamiltonians are quadratic in the ladder operators
plus an optional cubic vertex, and slow-time evolution applies
``exp(-i H t)`` through ``scipy.sparse.linalg.expm_multiply``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import DimensionMismatch, InsufficientData, NonHermitianSpec
from .filters import apply_filtration

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class FilterBasis:
    specs: tuple

    def __post_init__(self):
        specs = tuple(self.specs)
        if not specs:
            raise ValueError("a filter basis needs at least one filtration")
        keys = [json.dumps(s.to_json(), sort_keys=True) for s in specs]
        if len(set(keys)) != len(keys):
            raise ValueError("filter basis entries must be distinct")
        object.__setattr__(self, "specs", specs)

    @property
    def n_modes(self):
        return len(self.specs)


class FockSpace:
    """Occupations ``(n_1, ..., n_m)`` with ``0 <= n_a <= cutoff``, in
    lexicographic order (the last mode varies fastest)."""

    def __init__(self, n_modes, cutoff):
        if int(n_modes) != n_modes or n_modes < 1:
            raise ValueError("need at least one mode")
        if int(cutoff) != cutoff or cutoff < 0:
            raise ValueError("cutoff must be a non-negative integer")
        self.n_modes = int(n_modes)
        self.cutoff = int(cutoff)
        self.basis = list(itertools.product(range(self.cutoff + 1), repeat=self.n_modes))
        self._occ = np.array(self.basis, dtype=int).reshape(len(self.basis), self.n_modes)

    @property
    def dim(self):
        return (self.cutoff + 1) ** self.n_modes

    @property
    def occupations(self):
        return self._occ

    def index(self, occupation):
        occ = tuple(int(n) for n in occupation)
        if len(occ) != self.n_modes or any(not 0 <= n <= self.cutoff for n in occ):
            raise ValueError(f"occupation {occ} outside the truncated space")
        idx = 0
        for n in occ:
            idx = idx * (self.cutoff + 1) + n
        return idx

    def basis_state(self, occupation):
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(occupation)] = 1.0
        return QuantumState(self, psi)

    def vacuum(self):
        return self.basis_state((0,) * self.n_modes)


@dataclass(frozen=True, eq=False)
class QuantumState:
    space: FockSpace
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != (self.space.dim,):
            raise DimensionMismatch(f"state needs {self.space.dim} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("state coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    @property
    def norm(self):
        return float(np.linalg.norm(self.coefficients))

    def expectation(self, op):
        m = op.matrix if isinstance(op, QuantumOperator) else op
        c = self.coefficients
        return complex(np.vdot(c, m @ c))


@dataclass(frozen=True, eq=False)
class QuantumOperator:
    matrix: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch("operators must be square")
        object.__setattr__(self, "matrix", m)
        if self.hermitian and hermiticity_defect(m) > HERMITIAN_TOL:
            raise NonHermitianSpec("operator flagged hermitian is not")

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __matmul__(self, other):
        if isinstance(other, QuantumOperator):
            return QuantumOperator(self.matrix @ other.matrix)
        return self.matrix @ other

    def toarray(self):
        return self.matrix.toarray()


def hermiticity_defect(m):
    d = (m - m.conj().T)
    return float(abs(d).max()) if d.nnz else 0.0


def ladder_operators(space):
    """Return ``(annihilators, creators)``, one of each per mode."""
    occ = space.occupations
    stride = (space.cutoff + 1) ** np.arange(space.n_modes - 1, -1, -1)
    rows_all = np.arange(space.dim)
    annihilators, creators = [], []
    for a in range(space.n_modes):
        n = occ[:, a]
        src = rows_all[n >= 1]
        dst = src - stride[a]
        vals = np.sqrt(n[n >= 1].astype(float))
        lower = sp.csr_matrix((vals.astype(complex), (dst, src)), shape=(space.dim, space.dim))
        annihilators.append(QuantumOperator(lower))
        creators.append(QuantumOperator(lower.conj().T.tocsr()))
    return annihilators, creators


def number_operators(space):
    occ = space.occupations.astype(float)
    return [QuantumOperator(sp.diags(occ[:, a].astype(complex)).tocsr(), True)
            for a in range(space.n_modes)]


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """``H = sum w_ab a+_a a_b + sum g_abc (a+_a a_b a_c + h.c.)``."""

    omega: np.ndarray
    vertex: np.ndarray | None = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.omega, dtype=complex))
        m = w.shape[0]
        if w.shape != (m, m):
            raise DimensionMismatch("omega must be square")
        if np.max(np.abs(w - w.conj().T), initial=0.0) > HERMITIAN_TOL * max(
                1.0, float(np.max(np.abs(w), initial=0.0))):
            raise NonHermitianSpec("omega is not hermitian")
        object.__setattr__(self, "omega", w)
        if self.vertex is not None:
            g = np.asarray(self.vertex)
            if np.iscomplexobj(g):
                if np.any(g.imag != 0):
                    raise NonHermitianSpec("vertex coefficients must be real")
                g = g.real
            g = np.asarray(g, dtype=float)
            if g.shape != (m, m, m):
                raise DimensionMismatch(f"vertex must have shape {(m, m, m)}")
            object.__setattr__(self, "vertex", g)

    @property
    def n_modes(self):
        return self.omega.shape[0]

    @property
    def has_vertex(self):
        return self.vertex is not None and bool(np.any(self.vertex != 0))

    def to_json(self):
        w = self.omega
        d = {"omega_re": w.real.tolist(), "omega_im": w.imag.tolist()}
        d["vertex"] = None if self.vertex is None else self.vertex.tolist()
        return d

    @classmethod
    def from_json(cls, d):
        w = np.asarray(d["omega_re"], dtype=float)
        if d.get("omega_im") is not None:
            w = w + 1j * np.asarray(d["omega_im"], dtype=float)
        return cls(w, None if d.get("vertex") is None else np.asarray(d["vertex"], dtype=float))


def build_hamiltonian(spec, space):
    if spec.n_modes != space.n_modes:
        raise DimensionMismatch(f"spec has {spec.n_modes} modes, space has {space.n_modes}")
    ann, cre = ladder_operators(space)
    A = [x.matrix for x in ann]
    C = [x.matrix for x in cre]
    H = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    m = space.n_modes
    for a in range(m):
        for b in range(m):
            if spec.omega[a, b] != 0:
                H = H + spec.omega[a, b] * (C[a] @ A[b])
    if spec.vertex is not None:
        for a, b, c in zip(*np.nonzero(spec.vertex)):
            term = C[a] @ A[b] @ A[c]
            H = H + spec.vertex[a, b, c] * (term + term.conj().T)
    H = H.tocsr()
    H.eliminate_zeros()
    if hermiticity_defect(H) > HERMITIAN_TOL * max(1.0, float(abs(H).max()) if H.nnz else 1.0):
        raise NonHermitianSpec("assembled Hamiltonian is not hermitian")
    return QuantumOperator(H, True)


def evolve_slow(state, H, duration):
    """``exp(-i H duration) state``; a zero duration returns an exact copy."""
    if not isinstance(H, QuantumOperator) or not H.hermitian:
        raise NonHermitianSpec("slow evolution needs an operator flagged hermitian")
    if H.dim != state.space.dim:
        raise DimensionMismatch(f"operator dim {H.dim} does not match state dim {state.space.dim}")
    if duration == 0:
        return QuantumState(state.space, state.coefficients.copy())
    psi = expm_multiply(-1j * float(duration) * H.matrix, state.coefficients)
    return QuantumState(state.space, psi)


def quick_time_coefficients(basis, eps, traj, window, u_pure=None):
    """Propagator coefficients from filtrations on the trailing window.

    Each basis filtration runs on the last ``window`` nodes of its inputs;
    ``f_a`` is its output at the final node and
    ``omega_ab = (f_a . f_b + f_b . f_a) / 2`` (plain products for scalar
    outputs).  The vertex is left at zero.
    """
    n = traj.grid.n_nodes
    if int(window) != window or not 1 <= window <= n:
        raise InsufficientData(f"window must lie in [1, {n}], got {window}")
    start = n - int(window)
    signals = {"eps": eps.epsilon.values[start:], "phi": traj.states[start:]}
    if traj.controls is not None:
        signals["u"] = traj.controls[start:]
    if u_pure is not None:
        signals["u"] = np.asarray(getattr(u_pure, "values", u_pure))[start:]
    f = [apply_filtration(spec, signals).values[-1] for spec in basis.specs]
    m = len(f)
    omega = np.zeros((m, m))
    for a in range(m):
        for b in range(m):
            omega[a, b] = 0.5 * (float(np.dot(f[a], f[b])) + float(np.dot(f[b], f[a])))
    return HamiltonianSpec(omega)
