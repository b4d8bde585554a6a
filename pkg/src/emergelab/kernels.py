"""Hot inner loops with a compiled path and a vectorized numpy path.

Each public kernel dispatches to ``*_jit`` (numba) or ``*_np`` (numpy)
depending on :data:`emergelab._accel.USE_NUMBA`.  Both variants are importable
directly so tests and ``benchmarks/bench_kernels.py`` can compare them.
"""

import numpy as np

from . import _accel
from ._accel import njit, prange

TWO_PI_POW = (2.0 * np.pi) ** -1.5


# ---------------------------------------------------------------------------
# Fokker-Planck: one explicit conservative-flux step in 1-D
# ---------------------------------------------------------------------------


def fp_flux_step_np(p, F, D, gamma, dt, dx, periodic):
    if periodic:
        dp = np.roll(p, -1) - p
        dF = np.roll(F, -1) - F
        pf = 0.5 * (np.roll(p, -1) + p)
        J = -(D * dp / dx + gamma * dF / dx * pf)
        return p - dt / dx * (J - np.roll(J, 1))
    J = np.zeros(p.size + 1)
    J[1:-1] = -(D * np.diff(p) / dx + gamma * np.diff(F) / dx * 0.5 * (p[1:] + p[:-1]))
    return p - dt / dx * np.diff(J)


@njit(cache=True)
def fp_flux_step_jit(p, F, D, gamma, dt, dx, periodic):
    n = p.size
    nf = n if periodic else n - 1
    J = np.empty(nf)
    for j in range(nf):
        k = j + 1 if j + 1 < n else 0
        J[j] = -(D * (p[k] - p[j]) / dx + gamma * (F[k] - F[j]) / dx * 0.5 * (p[k] + p[j]))
    out = np.empty(n)
    for j in range(n):
        right = J[j] if (periodic or j < n - 1) else 0.0
        if j > 0:
            left = J[j - 1]
        elif periodic:
            left = J[n - 1]
        else:
            left = 0.0
        out[j] = p[j] - dt / dx * (right - left)
    return out


def fp_flux_step(p, F, D, gamma, dt, dx, periodic):
    fn = fp_flux_step_jit if _accel.USE_NUMBA else fp_flux_step_np
    return fn(np.ascontiguousarray(p, dtype=float), np.ascontiguousarray(F, dtype=float),
              float(D), float(gamma), float(dt), float(dx), bool(periodic))


# ---------------------------------------------------------------------------
# Madelung: RK4 in (log p, transport velocity) with fourth-difference damping
# ---------------------------------------------------------------------------
#
# Ghost layers: periodic wrap, or polynomial extrapolation (quadratic for
# log p, linear for velocity and energy).  Both are exact on Gaussian states.


def _pad_np(a, periodic, order):
    if periodic:
        return np.concatenate([a[-2:], a, a[:2]])
    if order == 2:
        l1 = 3 * a[0] - 3 * a[1] + a[2]
        l2 = 3 * l1 - 3 * a[0] + a[1]
        r1 = 3 * a[-1] - 3 * a[-2] + a[-3]
        r2 = 3 * r1 - 3 * a[-1] + a[-2]
    else:
        l1 = 2 * a[0] - a[1]
        l2 = 2 * l1 - a[0]
        r1 = 2 * a[-1] - a[-2]
        r2 = 2 * r1 - a[-1]
    return np.concatenate([[l2, l1], a, [r1, r2]])


def madelung_rhs_np(ell, v, V, dx, hbar, M, nu, periodic):
    lg = _pad_np(ell, periodic, 2)
    vg = _pad_np(v, periodic, 1)
    c, lft, rgt = slice(2, -2), slice(1, -3), slice(3, -1)
    dl = (lg[rgt] - lg[lft]) / (2 * dx)
    d2l = (lg[rgt] + lg[lft] - 2 * ell) / dx**2
    Q = -(hbar**2 / (2 * M)) * (0.25 * dl**2 + 0.5 * d2l)
    E = _pad_np(0.5 * v**2 + (V + Q) / M, periodic, 1)
    d4l = lg[4:] - 4 * lg[rgt] + 6 * lg[c] - 4 * lg[lft] + lg[:-4]
    d4v = vg[4:] - 4 * vg[rgt] + 6 * vg[c] - 4 * vg[lft] + vg[:-4]
    dv = (vg[rgt] - vg[lft]) / (2 * dx)
    rl = -v * dl - dv - nu * d4l / dx
    rv = -(E[rgt] - E[lft]) / (2 * dx) - nu * d4v / dx
    return rl, rv


def madelung_advance_np(ell, v, V, dx, hbar, M, nu, dt, nsteps, periodic):
    for _ in range(nsteps):
        a1, b1 = madelung_rhs_np(ell, v, V, dx, hbar, M, nu, periodic)
        a2, b2 = madelung_rhs_np(ell + 0.5 * dt * a1, v + 0.5 * dt * b1, V, dx, hbar, M, nu, periodic)
        a3, b3 = madelung_rhs_np(ell + 0.5 * dt * a2, v + 0.5 * dt * b2, V, dx, hbar, M, nu, periodic)
        a4, b4 = madelung_rhs_np(ell + dt * a3, v + dt * b3, V, dx, hbar, M, nu, periodic)
        ell = ell + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        v = v + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        if not (np.isfinite(ell).all() and np.isfinite(v).all()):
            break
    return ell, v


@njit(cache=True)
def _pad_jit(a, periodic, order):
    n = a.size
    out = np.empty(n + 4)
    out[2:n + 2] = a
    if periodic:
        out[0] = a[n - 2]
        out[1] = a[n - 1]
        out[n + 2] = a[0]
        out[n + 3] = a[1]
    elif order == 2:
        out[1] = 3 * a[0] - 3 * a[1] + a[2]
        out[0] = 3 * out[1] - 3 * a[0] + a[1]
        out[n + 2] = 3 * a[n - 1] - 3 * a[n - 2] + a[n - 3]
        out[n + 3] = 3 * out[n + 2] - 3 * a[n - 1] + a[n - 2]
    else:
        out[1] = 2 * a[0] - a[1]
        out[0] = 2 * out[1] - a[0]
        out[n + 2] = 2 * a[n - 1] - a[n - 2]
        out[n + 3] = 2 * out[n + 2] - a[n - 1]
    return out


@njit(cache=True)
def madelung_rhs_jit(ell, v, V, dx, hbar, M, nu, periodic):
    n = ell.size
    lg = _pad_jit(ell, periodic, 2)
    vg = _pad_jit(v, periodic, 1)
    E = np.empty(n)
    dl = np.empty(n)
    for j in range(n):
        k = j + 2
        dl[j] = (lg[k + 1] - lg[k - 1]) / (2 * dx)
        d2l = (lg[k + 1] + lg[k - 1] - 2 * lg[k]) / (dx * dx)
        Q = -(hbar * hbar / (2 * M)) * (0.25 * dl[j] * dl[j] + 0.5 * d2l)
        E[j] = 0.5 * v[j] * v[j] + (V[j] + Q) / M
    Eg = _pad_jit(E, periodic, 1)
    rl = np.empty(n)
    rv = np.empty(n)
    for j in range(n):
        k = j + 2
        d4l = lg[k + 2] - 4 * lg[k + 1] + 6 * lg[k] - 4 * lg[k - 1] + lg[k - 2]
        d4v = vg[k + 2] - 4 * vg[k + 1] + 6 * vg[k] - 4 * vg[k - 1] + vg[k - 2]
        dv = (vg[k + 1] - vg[k - 1]) / (2 * dx)
        rl[j] = -v[j] * dl[j] - dv - nu * d4l / dx
        rv[j] = -(Eg[k + 1] - Eg[k - 1]) / (2 * dx) - nu * d4v / dx
    return rl, rv


@njit(cache=True)
def madelung_advance_jit(ell, v, V, dx, hbar, M, nu, dt, nsteps, periodic):
    for _ in range(nsteps):
        a1, b1 = madelung_rhs_jit(ell, v, V, dx, hbar, M, nu, periodic)
        a2, b2 = madelung_rhs_jit(ell + 0.5 * dt * a1, v + 0.5 * dt * b1, V, dx, hbar, M, nu, periodic)
        a3, b3 = madelung_rhs_jit(ell + 0.5 * dt * a2, v + 0.5 * dt * b2, V, dx, hbar, M, nu, periodic)
        a4, b4 = madelung_rhs_jit(ell + dt * a3, v + dt * b3, V, dx, hbar, M, nu, periodic)
        ell = ell + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        v = v + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        if not (np.isfinite(ell).all() and np.isfinite(v).all()):
            break
    return ell, v


def madelung_advance(ell, v, V, dx, hbar, M, nu, dt, nsteps, periodic):
    fn = madelung_advance_jit if _accel.USE_NUMBA else madelung_advance_np
    return fn(np.ascontiguousarray(ell, dtype=float), np.ascontiguousarray(v, dtype=float),
              np.ascontiguousarray(V, dtype=float), float(dx), float(hbar), float(M), float(nu),
              float(dt), int(nsteps), bool(periodic))


# ---------------------------------------------------------------------------
# Curly-bracket accumulation: Gaussian-weighted neuron sums at many points
# ---------------------------------------------------------------------------


def curly_accumulate_np(points, centers, gmats, payload):
    """``out[m, k] = sum_i payload[i, k] * (2 pi)^-1.5 exp(-d^T g_i d / 2)``, ``d = points[m] - centers[i]``."""
    out = np.zeros((points.shape[0], payload.shape[1]))
    for i in range(centers.shape[0]):
        d = points - centers[i]
        w = TWO_PI_POW * np.exp(-0.5 * np.einsum("ma,ab,mb->m", d, gmats[i], d))
        out += w[:, None] * payload[i][None, :]
    return out


@njit(parallel=True, cache=True)
def curly_accumulate_jit(points, centers, gmats, payload):
    m_pts = points.shape[0]
    n = centers.shape[0]
    k = payload.shape[1]
    out = np.zeros((m_pts, k))
    for m in prange(m_pts):
        for i in range(n):
            d0 = points[m, 0] - centers[i, 0]
            d1 = points[m, 1] - centers[i, 1]
            d2 = points[m, 2] - centers[i, 2]
            g = gmats[i]
            quad = (g[0, 0] * d0 * d0 + g[1, 1] * d1 * d1 + g[2, 2] * d2 * d2
                    + 2.0 * (g[0, 1] * d0 * d1 + g[0, 2] * d0 * d2 + g[1, 2] * d1 * d2))
            w = TWO_PI_POW * np.exp(-0.5 * quad)
            for c in range(k):
                out[m, c] += w * payload[i, c]
    return out


def curly_accumulate(points, centers, gmats, payload):
    fn = curly_accumulate_jit if _accel.USE_NUMBA else curly_accumulate_np
    return fn(np.ascontiguousarray(points, dtype=float), np.ascontiguousarray(centers, dtype=float),
              np.ascontiguousarray(gmats, dtype=float), np.ascontiguousarray(payload, dtype=float))


# ---------------------------------------------------------------------------
# Multilinear interpolation of node-valued tensors on a 4-D lattice
# ---------------------------------------------------------------------------


def interp_multilinear_np(values, origin, spacing, periodic, point):
    """Interpolate ``values`` (shape ``(n0, n1, n2, n3, C)``) at a 4-D point.

    Axes with a single node are treated as constant.  Non-periodic axes clamp
    to the last cell.
    """
    shape = values.shape[:4]
    lo = []
    frac = []
    for a in range(4):
        n = shape[a]
        if n == 1:
            lo.append(0)
            frac.append(0.0)
            continue
        s = (point[a] - origin[a]) / spacing[a]
        i = int(np.floor(s))
        f = s - i
        if periodic[a]:
            i %= n
        elif i < 0:
            i, f = 0, 0.0
        elif i >= n - 1:
            i, f = n - 2, 1.0
        lo.append(i)
        frac.append(f)
    out = np.zeros(values.shape[4])
    for corner in range(16):
        w = 1.0
        idx = []
        for a in range(4):
            bit = (corner >> a) & 1
            if shape[a] == 1:
                if bit:
                    w = 0.0
                idx.append(0)
                continue
            w *= frac[a] if bit else 1.0 - frac[a]
            j = lo[a] + bit
            idx.append(j % shape[a] if periodic[a] else j)
        if w != 0.0:
            out += w * values[idx[0], idx[1], idx[2], idx[3]]
    return out


@njit(cache=True)
def interp_multilinear_jit(values, origin, spacing, periodic, point):
    lo = np.zeros(4, dtype=np.int64)
    frac = np.zeros(4)
    for a in range(4):
        n = values.shape[a]
        if n == 1:
            continue
        s = (point[a] - origin[a]) / spacing[a]
        i = int(np.floor(s))
        f = s - i
        if periodic[a]:
            i = i % n
        elif i < 0:
            i = 0
            f = 0.0
        elif i >= n - 1:
            i = n - 2
            f = 1.0
        lo[a] = i
        frac[a] = f
    nc = values.shape[4]
    out = np.zeros(nc)
    idx = np.zeros(4, dtype=np.int64)
    for corner in range(16):
        w = 1.0
        for a in range(4):
            bit = (corner >> a) & 1
            n = values.shape[a]
            if n == 1:
                if bit:
                    w = 0.0
                idx[a] = 0
                continue
            w *= frac[a] if bit else 1.0 - frac[a]
            j = lo[a] + bit
            idx[a] = j % n if periodic[a] else j
        if w != 0.0:
            for c in range(nc):
                out[c] += w * values[idx[0], idx[1], idx[2], idx[3], c]
    return out


def interp_multilinear(values, origin, spacing, periodic, point):
    if _accel.USE_NUMBA:
        return interp_multilinear_jit(values, np.asarray(origin, dtype=float), np.asarray(spacing, dtype=float),
                                      np.asarray(periodic, dtype=np.bool_), np.asarray(point, dtype=float))
    return interp_multilinear_np(values, origin, spacing, periodic, point)


def interp_multilinear_batch(values, origin, spacing, periodic, points):
    """Vectorised :func:`interp_multilinear` over ``points`` of shape ``(M, 4)``; returns ``(M, C)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    shape = values.shape[:4]
    lo = np.zeros((m, 4), dtype=np.int64)
    frac = np.zeros((m, 4))
    for a in range(4):
        n = shape[a]
        if n == 1:
            continue
        s = (pts[:, a] - origin[a]) / spacing[a]
        i = np.floor(s).astype(np.int64)
        f = s - i
        if periodic[a]:
            i %= n
        else:
            below, above = i < 0, i >= n - 1
            i = np.where(below, 0, np.where(above, n - 2, i))
            f = np.where(below, 0.0, np.where(above, 1.0, f))
        lo[:, a] = i
        frac[:, a] = f
    out = np.zeros((m, values.shape[4]))
    for corner in range(16):
        bits = [(corner >> a) & 1 for a in range(4)]
        if any(bits[a] and shape[a] == 1 for a in range(4)):
            continue
        w = np.ones(m)
        idx = []
        for a in range(4):
            if shape[a] == 1:
                idx.append(np.zeros(m, dtype=np.int64))
                continue
            w *= frac[:, a] if bits[a] else 1.0 - frac[:, a]
            j = lo[:, a] + bits[a]
            idx.append(j % shape[a] if periodic[a] else j)
        out += w[:, None] * values[idx[0], idx[1], idx[2], idx[3]]
    return out
