"""Closed-form test metrics injected directly as :class:`MetricField` objects.

All are in synchronous gauge.  Their Christoffel symbols and Ricci tensors are
known in closed form, which makes them oracles for the lattice tensor calculus.
"""

import numpy as np

from .metric import Lattice, MetricField, from_spatial

TWO_PI = 2.0 * np.pi


def box(n, length=TWO_PI, origin=0.0, periodic=True, nt=1, t0=0.0, dt=1.0):
    """Cubic ``n^3`` spatial lattice with ``nt`` time slices."""
    h = length / n
    return Lattice((t0, origin, origin, origin), (dt, h, h, h), (nt, n, n, n),
                   (False, periodic, periodic, periodic))


def _coords(lat):
    return np.broadcast_arrays(*lat.mesh())


def flat(lat):
    return MetricField(lat, from_spatial(lat, np.eye(3)), meta={"kind": "flat"})


def frw(lat, a=lambda t: t):
    """``g = diag(-1, a(t)^2, a(t)^2, a(t)^2)``."""
    t = lat.axis(0).reshape(-1, 1, 1, 1, 1, 1)
    spatial = a(t)**2 * np.eye(3)
    return MetricField(lat, from_spatial(lat, spatial), meta={"kind": "frw"})


def weak_field(lat, phi):
    """Spatial perturbation ``g_ab = (1 + 2 phi(x)) delta_ab`` with ``phi(t, x, y, z)`` vectorised."""
    T, X, Y, Z = _coords(lat)
    p = np.asarray(phi(T, X, Y, Z), dtype=float) * np.ones(lat.shape)
    return MetricField(lat, from_spatial(lat, (1.0 + 2.0 * p)[..., None, None] * np.eye(3)),
                       meta={"kind": "weak_field"})


def conformally_flat(lat, phi):
    """``g_ab = exp(2 phi(x)) delta_ab``."""
    T, X, Y, Z = _coords(lat)
    p = np.asarray(phi(T, X, Y, Z), dtype=float) * np.ones(lat.shape)
    return MetricField(lat, from_spatial(lat, np.exp(2.0 * p)[..., None, None] * np.eye(3)),
                       meta={"kind": "conformally_flat"})


def perturbation_modes(t, x, y, z):
    """Symmetric spatial perturbation built from smooth ``2 pi``-periodic modes, shape ``(..., 3, 3)``."""
    h = np.zeros(np.broadcast(t, x, y, z).shape + (3, 3))
    h[..., 0, 0] = np.sin(x) * np.cos(y)
    h[..., 1, 1] = np.cos(y + z)
    h[..., 2, 2] = np.sin(z) * np.sin(x)
    h[..., 0, 1] = h[..., 1, 0] = 0.5 * np.sin(x + y)
    h[..., 1, 2] = h[..., 2, 1] = 0.3 * np.cos(z - x)
    return h


def periodic_perturbation(lat, eps, modes=perturbation_modes):
    """``g_ab = delta_ab + eps h_ab(x)`` on a periodic lattice."""
    T, X, Y, Z = _coords(lat)
    return MetricField(lat, from_spatial(lat, np.eye(3) + eps * modes(T, X, Y, Z)),
                       meta={"kind": "periodic_perturbation", "eps": eps})


def conformal_christoffel(grad_phi):
    """``Gamma^a_bc = delta^a_b phi_c + delta^a_c phi_b - delta_bc phi_a`` for ``g_ab = e^{2 phi} delta_ab``.

    ``grad_phi`` is a 3-vector; returns the full 4x4x4 array (time components vanish).
    """
    d = np.asarray(grad_phi, dtype=float)
    G = np.zeros((4, 4, 4))
    e = np.eye(3)
    G[1:, 1:, 1:] = (np.einsum("ab,c->abc", e, d) + np.einsum("ac,b->abc", e, d) - np.einsum("bc,a->abc", e, d))
    return G


def frw_christoffel(t, a, adot):
    """Nonzero symbols of ``diag(-1, a^2, a^2, a^2)``: ``Gamma^0_ab = a adot delta_ab``, ``Gamma^a_0b = adot/a delta``."""
    G = np.zeros((4, 4, 4))
    for k in range(1, 4):
        G[0, k, k] = a(t) * adot(t)
        G[k, 0, k] = G[k, k, 0] = adot(t) / a(t)
    return G


def frw_ricci(t, a, adot, addot):
    """``R_00 = -3 addot / a``, ``R_ab = (a addot + 2 adot^2) delta_ab``."""
    R = np.zeros((4, 4))
    R[0, 0] = -3.0 * addot(t) / a(t)
    for k in range(1, 4):
        R[k, k] = a(t) * addot(t) + 2.0 * adot(t)**2
    return R
