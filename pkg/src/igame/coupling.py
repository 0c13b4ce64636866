"""Affine-in-epsilon couplings ``u_i = A_i(phi, u0_i) + B_i(phi, u0_i) @ eps_i``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import BasisTerm, Expansion, _node_interp, rk4
from .errors import DimensionMismatch


@dataclass(frozen=True)
class ChannelCoupling:
    """One control channel.  ``A`` has ``control_dim`` outputs, ``B`` has
    ``control_dim * eps_dim`` outputs read row-major into a matrix."""

    A: Expansion
    B: Expansion
    control_dim: int
    eps_dim: int

    def __post_init__(self):
        if self.A.n_out != self.control_dim:
            raise DimensionMismatch("A must have one output per control coordinate")
        if self.B.n_out != self.control_dim * self.eps_dim:
            raise DimensionMismatch("B must have control_dim * eps_dim outputs")
        if self.A.inputs != self.B.inputs:
            raise DimensionMismatch("A and B must share their inputs")

    def matrices(self, phi, u0):
        blocks = {"phi": phi, "u0": u0}
        a = self.A.evaluate(**blocks)
        b = self.B.evaluate(**blocks)
        return a, b.reshape(b.shape[:-1] + (self.control_dim, self.eps_dim))


class CouplingForm:
    """Per-channel couplings acting on the stacked control vector.

    Channels partition both the control vector and the epsilon vector in
    order.  The pure control of a channel has the dimension of its control.
    """

    def __init__(self, channels, state_dim):
        self.channels = tuple(channels)
        self.state_dim = int(state_dim)
        if not self.channels:
            raise DimensionMismatch("a coupling needs at least one channel")
        for ch in self.channels:
            if ch.A.inputs != (("phi", self.state_dim), ("u0", ch.control_dim)):
                raise DimensionMismatch("channel inputs must be (phi, u0) of matching dims")

    @property
    def control_dim(self):
        return sum(ch.control_dim for ch in self.channels)

    @property
    def eps_dim(self):
        return sum(ch.eps_dim for ch in self.channels)

    def _slices(self):
        cu = ce = 0
        for ch in self.channels:
            yield ch, slice(cu, cu + ch.control_dim), slice(ce, ce + ch.eps_dim)
            cu += ch.control_dim
            ce += ch.eps_dim

    def channel_matrices(self, phi, u0):
        """Yield ``(channel, u_slice, eps_slice, A, B)`` evaluated pointwise."""
        for ch, su, se in self._slices():
            a, b = ch.matrices(phi, u0[..., su])
            yield ch, su, se, a, b

    def apply(self, phi, u0, eps):
        phi = np.asarray(phi, dtype=float)
        u0 = np.asarray(u0, dtype=float)
        eps = np.asarray(eps, dtype=float)
        if u0.shape[-1] != self.control_dim or eps.shape[-1] != self.eps_dim:
            raise DimensionMismatch(
                f"coupling expects u0 dim {self.control_dim} and eps dim {self.eps_dim}")
        lead = np.broadcast_shapes(phi.shape[:-1], u0.shape[:-1], eps.shape[:-1])
        out = np.empty(lead + (self.control_dim,))
        for _, su, se, a, b in self.channel_matrices(phi, u0):
            out[..., su] = a + np.einsum("...ij,...j->...i", b, eps[..., se])
        return out

    def __eq__(self, other):
        return (isinstance(other, CouplingForm) and self.state_dim == other.state_dim
                and self.channels == other.channels)

    def __repr__(self):
        dims = [(c.control_dim, c.eps_dim) for c in self.channels]
        return f"CouplingForm(state_dim={self.state_dim}, channels={dims})"


def _unit(n_vars, idx):
    return BasisTerm(tuple(int(i == idx) for i in range(n_vars)))


def additive_channel(state_dim, control_dim):
    """``u = u0 + eps``."""
    n = state_dim + control_dim
    inputs = (("phi", state_dim), ("u0", control_dim))
    terms = [_unit(n, state_dim + j) for j in range(control_dim)]
    A = Expansion(terms, np.eye(control_dim), inputs)
    B = Expansion([BasisTerm((0,) * n)], np.eye(control_dim).reshape(-1, 1), inputs)
    return ChannelCoupling(A, B, control_dim, control_dim)


def multiplicative_channel(state_dim, control_dim):
    """``u = eps * u0`` elementwise (B vanishes where u0 does)."""
    n = state_dim + control_dim
    inputs = (("phi", state_dim), ("u0", control_dim))
    A = Expansion([BasisTerm((0,) * n)], np.zeros((control_dim, 1)), inputs)
    terms = [_unit(n, state_dim + j) for j in range(control_dim)]
    coef = np.zeros((control_dim * control_dim, control_dim))
    for j in range(control_dim):
        coef[j * control_dim + j, j] = 1.0
    return ChannelCoupling(A, Expansion(terms, coef, inputs), control_dim, control_dim)


def state_scaled_channel(state_dim, control_dim, terms, coefficients):
    """``u = u0 + diag(b(phi)) eps`` with ``b`` an expansion in phi only.

    ``terms`` are exponent tuples over the state coordinates, ``coefficients``
    has one row per control coordinate.
    """
    n = state_dim + control_dim
    inputs = (("phi", state_dim), ("u0", control_dim))
    a_terms = [_unit(n, state_dim + j) for j in range(control_dim)]
    A = Expansion(a_terms, np.eye(control_dim), inputs)
    b_terms = [BasisTerm(tuple(t) + (0,) * control_dim) for t in terms]
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    coef = np.zeros((control_dim * control_dim, len(b_terms)))
    for j in range(control_dim):
        coef[j * control_dim + j] = coefficients[j]
    return ChannelCoupling(A, Expansion(b_terms, coef, inputs), control_dim, control_dim)


def additive(state_dim, channel_dims):
    return CouplingForm([additive_channel(state_dim, k) for k in channel_dims], state_dim)


def simulate_coupled(model, coupling, u_pure, eps, initial_state, grid):
    """Closed-loop simulation: the coupling is re-evaluated on the simulated state.

    ``u_pure`` and ``eps`` are node series of shape ``(..., n+1, dim)``; leading
    batch dimensions are simulated together.  Both are interpolated linearly
    between nodes.  Returns ``(states, controls)`` sampled at the nodes.
    """
    u_pure = np.asarray(u_pure, dtype=float)
    eps = np.asarray(eps, dtype=float)
    lead = np.broadcast_shapes(u_pure.shape[:-2], eps.shape[:-2])
    x0 = np.broadcast_to(np.asarray(initial_state, dtype=float), lead + (model.state_dim,))

    def f(k, theta, x):
        u = coupling.apply(x, _node_interp(u_pure, k, theta), _node_interp(eps, k, theta))
        return model.rhs(x, u)

    states = rk4(f, x0, grid)
    controls = coupling.apply(states, u_pure, eps)
    return states, controls
