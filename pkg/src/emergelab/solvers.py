"""Grid solvers for densities over trainable variables.

* :func:`fp_step` - explicit conservative finite-volume drift-diffusion step.
* :func:`madelung_step` - continuity plus Euler equation with quantum potential.
* :func:`schrodinger_step` - Crank-Nicolson for ``i hbar psi_t = H psi``.

Wave functions are ``psi = sqrt(p) exp(-i Ft / hbar)`` and the fluid velocity
is ``u = grad(Ft) / M``.  With that phase convention the probability current
is ``-p u``; the Madelung solver transports density with ``v = -u`` so that
its solutions coincide with those of the Schrodinger solver.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from . import kernels
from .dynamics import P_MIN, LearningParams, QuantumParams, _face_diffs
from .errors import ConfigurationError, NodeError, NumericalError, StabilityError
from .grid import DensityField, GridSpec, PotentialSpec, VelocityField, WaveField

FP_CFL = 0.25
MADELUNG_CFL = 0.2
MADELUNG_NU = 2.0
NODE_FLOOR = 1e-250
PHASE_LIMIT = 0.1


def _field(grid: GridSpec, F):
    if callable(F):
        return grid.evaluate(F)
    return np.broadcast_to(np.asarray(F, dtype=float), grid.shape).astype(float)


# ---------------------------------------------------------------------------
# Fokker-Planck
# ---------------------------------------------------------------------------


def fp_stable_dt(grid: GridSpec, F, lp: LearningParams, c: float = FP_CFL) -> float:
    """Largest dt allowed by the diffusion bound ``c dx^2 / D`` and the drift bound ``dx / (2 |gamma F'|)``."""
    Fv = _field(grid, F)
    bounds = [math.inf]
    for k, dk in enumerate(grid.spacing):
        if lp.diffusion > 0:
            bounds.append(c * dk * dk / lp.diffusion)
        slope = np.abs(np.diff(Fv, axis=k)).max(initial=0.0) / dk
        if lp.gamma != 0 and slope > 0:
            bounds.append(0.5 * dk / (abs(lp.gamma) * slope))
    if grid.dim == 2:
        bounds[1:] = [b / 2 for b in bounds[1:]]
    return min(bounds)


def _fp_step_nd(p, F, D, gamma, dt, grid):
    out = p.copy()
    periodic = grid.boundary == "periodic"
    for k, dk in enumerate(grid.spacing):
        if periodic:
            dp = np.roll(p, -1, k) - p
            dF = np.roll(F, -1, k) - F
            pf = 0.5 * (np.roll(p, -1, k) + p)
            J = -(D * dp / dk + gamma * dF / dk * pf)
            out -= dt / dk * (J - np.roll(J, 1, k))
        else:
            J = -(D * np.diff(p, axis=k) / dk + gamma * np.diff(F, axis=k) / dk
                  * 0.5 * (np.take(p, range(1, p.shape[k]), k) + np.take(p, range(p.shape[k] - 1), k)))
            pad = [(0, 0)] * p.ndim
            pad[k] = (1, 1)
            J = np.pad(J, pad)
            out -= dt / dk * np.diff(J, axis=k)
    return out


def fp_step(p: DensityField, F, lp: LearningParams, c: float = FP_CFL, n_steps: int = 1) -> DensityField:
    """Advance ``dp/dt = div(D grad p + gamma p grad F)`` by ``n_steps`` explicit steps of ``lp.dt``.

    Fluxes live on cell faces and vanish on reflecting walls, so the total
    mass changes only by rounding.
    """
    grid = p.grid
    Fv = _field(grid, F)
    lim = fp_stable_dt(grid, Fv, lp, c)
    if lp.dt > lim:
        raise StabilityError(f"dt = {lp.dt:g} exceeds the explicit stability bound {lim:g}", suggested_dt=lim)
    v = p.values
    for _ in range(int(n_steps)):
        if grid.dim == 1:
            v = kernels.fp_flux_step(v, Fv, lp.diffusion, lp.gamma, lp.dt, grid.dx, grid.boundary == "periodic")
        else:
            v = _fp_step_nd(v, Fv, lp.diffusion, lp.gamma, lp.dt, grid)
    if not np.all(np.isfinite(v)):
        raise NumericalError("Fokker-Planck step produced non-finite values")
    # rounding can leave a few -1e-20 values in the far tails
    return DensityField(grid, np.maximum(v, 0.0), p.time + n_steps * lp.dt, p.mass_deficit)


def fp_run(p: DensityField, F, lp: LearningParams, T: float, c: float = FP_CFL, snapshots: int = 0):
    """Integrate to ``p.time + T``; returns the final field, or ``snapshots + 1`` evenly spaced fields."""
    n = max(1, int(math.ceil(T / lp.dt - 1e-9)))
    lp = LearningParams(lp.gamma, lp.diffusion, T / n, lp.n_replicas, lp.seed)
    if snapshots <= 0:
        return fp_step(p, F, lp, c, n)
    marks = np.unique(np.linspace(0, n, snapshots + 1).round().astype(int))
    out = [p]
    for a, b in zip(marks[:-1], marks[1:]):
        out.append(fp_step(out[-1], F, lp, c, b - a))
    return out


def fp_relax(p: DensityField, F, lp: LearningParams, tol: float = 1e-10, chunk_time: float = 1.0,
             max_time: float = 1e4, c: float = FP_CFL) -> DensityField:
    """Run until the L1 change over ``chunk_time`` drops below ``tol``."""
    t0 = p.time
    while p.time - t0 < max_time:
        q = fp_run(p, F, lp, chunk_time, c)
        change = compare_densities(p, q)
        p = q
        if change < tol:
            return p
    raise NumericalError("Fokker-Planck relaxation did not converge", {"last_change": change, "time": p.time})


def fp_stationary(grid: GridSpec, F, lp: LearningParams) -> DensityField:
    """Continuum stationary law ``exp(-gamma F / D) / Z`` sampled at the nodes."""
    if lp.diffusion <= 0:
        raise ConfigurationError("the stationary law needs D > 0")
    a = -lp.gamma * _field(grid, F) / lp.diffusion
    return DensityField(grid, np.exp(a - a.max())).normalized()


# ---------------------------------------------------------------------------
# Madelung
# ---------------------------------------------------------------------------


def madelung_stable_dt(grid: GridSpec, qp: QuantumParams, v=None, c: float = MADELUNG_CFL) -> float:
    dx = min(grid.spacing)
    lim = c * dx * dx * abs(qp.mass) / qp.hbar if qp.hbar > 0 else math.inf
    if v is not None:
        vmax = float(np.abs(v).max(initial=0.0))
        if vmax > 0:
            lim = min(lim, 0.5 * dx / vmax)
    return lim / grid.dim


def _pad_axis(a, axis, periodic, order):
    n = a.shape[axis]

    def t(i):
        return np.take(a, [i % n], axis=axis)

    if periodic:
        return np.concatenate([t(-2), t(-1), a, t(0), t(1)], axis=axis)
    if order == 2:
        l1 = 3 * t(0) - 3 * t(1) + t(2)
        l2 = 3 * l1 - 3 * t(0) + t(1)
        r1 = 3 * t(-1) - 3 * t(-2) + t(-3)
        r2 = 3 * r1 - 3 * t(-1) + t(-2)
    else:
        l1 = 2 * t(0) - t(1)
        l2 = 2 * l1 - t(0)
        r1 = 2 * t(-1) - t(-2)
        r2 = 2 * r1 - t(-1)
    return np.concatenate([l2, l1, a, r1, r2], axis=axis)


def _stencils(a, axis, periodic, order, dx):
    g = _pad_axis(a, axis, periodic, order)
    n = a.shape[axis]

    def s(off):
        return np.take(g, range(2 + off, 2 + off + n), axis=axis)

    d1 = (s(1) - s(-1)) / (2 * dx)
    d2 = (s(1) + s(-1) - 2 * a) / (dx * dx)
    d4 = s(2) - 4 * s(1) + 6 * a - 4 * s(-1) + s(-2)
    return d1, d2, d4


def _madelung_rhs_nd(ell, v, V, spacing, hbar, M, nu, periodic):
    """Log-density form on a tensor grid; ``v`` has shape ``(dim, *shape)``."""
    dim = len(spacing)
    Q = np.zeros_like(ell)
    rl = np.zeros_like(ell)
    for k, dk in enumerate(spacing):
        d1, d2, d4 = _stencils(ell, k, periodic, 2, dk)
        Q += 0.25 * d1 * d1 + 0.5 * d2
        dv, _, _ = _stencils(v[k], k, periodic, 1, dk)
        rl -= v[k] * d1 + dv + nu * d4 / dk
    Q *= -(hbar * hbar) / (2 * M)
    E = 0.5 * np.sum(v * v, axis=0) + (V + Q) / M
    rv = np.zeros_like(v)
    for j in range(dim):
        dE, _, _ = _stencils(E, j, periodic, 1, spacing[j])
        rv[j] = -dE
        for k, dk in enumerate(spacing):
            _, _, d4 = _stencils(v[j], k, periodic, 1, dk)
            rv[j] -= nu * d4 / dk
    return rl, rv


def _madelung_advance_nd(ell, v, V, spacing, hbar, M, nu, dt, n, periodic):
    def f(a, b):
        return _madelung_rhs_nd(a, b, V, spacing, hbar, M, nu, periodic)

    for _ in range(n):
        a1, b1 = f(ell, v)
        a2, b2 = f(ell + 0.5 * dt * a1, v + 0.5 * dt * b1)
        a3, b3 = f(ell + 0.5 * dt * a2, v + 0.5 * dt * b2)
        a4, b4 = f(ell + dt * a3, v + dt * b3)
        ell = ell + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        v = v + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        if not (np.isfinite(ell).all() and np.isfinite(v).all()):
            break
    return ell, v


def madelung_step(p: DensityField, u: VelocityField, pot: PotentialSpec, qp: QuantumParams, dt: float | None = None,
                  n_steps: int = 1, nu: float = MADELUNG_NU, floor: float = NODE_FLOOR,
                  c: float = MADELUNG_CFL):
    """Advance the hydrodynamic pair ``(p, u)`` by ``n_steps`` RK4 steps.

    The density is evolved as ``log p`` and the quantum potential is written
    as ``-(hbar^2 / 2M) (|grad log p|^2 / 4 + lap log p / 2)``, which equals
    ``-(hbar^2 / 2M) lap(sqrt p) / sqrt p`` for positive ``p``.  A fourth
    difference damping term of strength ``nu`` suppresses grid-scale modes in
    the far tails; it vanishes on log-quadratic (Gaussian) states.  Non-periodic
    edges use polynomial extrapolation (an outflow closure) instead of walls.
    """
    grid = p.grid
    if qp.mass == 0:
        raise ConfigurationError("mass must be non-zero")
    if np.any(p.values <= floor):
        raise NodeError("density at or below the positivity floor: node encountered",
                        {"n_nodes": int(np.sum(p.values <= floor)), "floor": floor})
    vel = -u.values
    lim = madelung_stable_dt(grid, qp, vel, c)
    if dt is None:
        dt = lim
    elif dt > lim * (1 + 1e-12):
        raise StabilityError(f"dt = {dt:g} exceeds the Madelung stability bound {lim:g}", suggested_dt=lim)
    V = pot.values(grid)
    ell = np.log(p.values)
    periodic = grid.boundary == "periodic"
    if grid.dim == 1:
        ell, vel = kernels.madelung_advance(ell, vel, V, grid.dx, qp.hbar, qp.mass, nu, dt, n_steps, periodic)
    else:
        ell, vel = _madelung_advance_nd(ell, vel, V, grid.spacing, qp.hbar, qp.mass, nu, dt, n_steps, periodic)
    if not (np.all(np.isfinite(ell)) and np.all(np.isfinite(vel))):
        raise NumericalError("Madelung step produced non-finite values", {"dt": dt, "n_steps": n_steps})
    pv = np.exp(ell)
    if np.any(pv <= floor):
        raise NodeError("density fell below the positivity floor: node encountered",
                        {"n_nodes": int(np.sum(pv <= floor)), "floor": floor})
    t = p.time + n_steps * dt
    return DensityField(grid, pv, t, p.mass_deficit), VelocityField(grid, -vel)


def madelung_evolve(p: DensityField, u: VelocityField, pot: PotentialSpec, qp: QuantumParams, T: float,
                    nu: float = MADELUNG_NU, c: float = MADELUNG_CFL, floor: float = NODE_FLOOR):
    """Integrate over a duration ``T`` with the largest uniform step inside the stability bound."""
    lim = madelung_stable_dt(p.grid, qp, u.values, c)
    n = max(1, int(math.ceil(T / lim - 1e-9)))
    return madelung_step(p, u, pot, qp, T / n, n, nu, floor, c)


# ---------------------------------------------------------------------------
# Schrodinger
# ---------------------------------------------------------------------------


def _laplacian_1d(n, dx, periodic):
    main = -2.0 * np.ones(n)
    if not periodic:
        # mirror ghost: zero normal derivative on the cell faces at the walls
        main[0] = main[-1] = -1.0
    L = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="lil")
    if periodic:
        L[0, n - 1] = 1.0
        L[n - 1, 0] = 1.0
    return L.tocsr() / (dx * dx)


def hamiltonian(grid: GridSpec, V, hbar: float, mass: float):
    """Sparse ``-(hbar^2 / 2M) lap + V`` on the grid (row-major flattening in 2-D)."""
    periodic = grid.boundary == "periodic"
    if grid.dim == 1:
        lap = _laplacian_1d(grid.shape[0], grid.dx, periodic)
    else:
        (nx, ny), (hx, hy) = grid.shape, grid.spacing
        lap = sp.kron(_laplacian_1d(nx, hx, periodic), sp.identity(ny)) + sp.kron(sp.identity(nx), _laplacian_1d(ny, hy, periodic))
    return (-(hbar * hbar) / (2 * mass) * lap + sp.diags(np.ravel(V))).tocsc()


class CrankNicolson:
    """Factorised Crank-Nicolson propagator for a fixed grid, potential and step."""

    def __init__(self, grid: GridSpec, V, hbar: float, mass: float, dt: float):
        H = hamiltonian(grid, V, hbar, mass)
        n = H.shape[0]
        I = sp.identity(n, format="csc")
        self.A = (I + 0.5j * dt / hbar * H).tocsc()
        self.B = (I - 0.5j * dt / hbar * H).tocsc()
        try:
            self.lu = spl.splu(self.A)
        except RuntimeError as exc:
            raise NumericalError(f"Crank-Nicolson factorisation failed: {exc}", _condition_diag(self.A)) from None
        self.shape = grid.shape

    def apply(self, psi, n_steps=1):
        x = np.ravel(psi).astype(complex)
        for _ in range(int(n_steps)):
            x = self.lu.solve(self.B @ x)
        if not np.all(np.isfinite(x)):
            raise NumericalError("Crank-Nicolson solve produced non-finite values", _condition_diag(self.A))
        return x.reshape(self.shape)


def _condition_diag(A):
    diag = {"n": A.shape[0]}
    try:
        diag["cond_1"] = float(spl.onenormest(A) * spl.onenormest(spl.inv(A.tocsc())))
    except Exception as exc:  # diagnostics only
        diag["cond_error"] = str(exc)
    return diag


def schrodinger_step(w: WaveField, pot: PotentialSpec, dt: float, n_steps: int = 1,
                     phase_limit: float = PHASE_LIMIT) -> WaveField:
    """``n_steps`` Crank-Nicolson steps of size ``dt``; unitary up to the linear-solve error.

    The mid-range of ``V`` is split off and applied as an exact global phase,
    so a constant potential changes nothing but the phase.
    """
    grid = w.grid
    V = pot.values(grid)
    ratio = dt * float(np.abs(V).max(initial=0.0)) / w.hbar
    if ratio >= phase_limit:
        raise StabilityError(f"dt max|V| / hbar = {ratio:g} does not resolve the potential phase",
                             suggested_dt=dt * phase_limit / ratio * 0.999)
    V0 = 0.5 * (float(V.max()) + float(V.min()))
    prop = CrankNicolson(grid, V - V0, w.hbar, w.mass, dt)
    psi = prop.apply(w.values, n_steps) * np.exp(-1j * V0 * n_steps * dt / w.hbar)
    return WaveField(grid, psi, w.time + n_steps * dt, w.hbar, w.mass)


def schrodinger_evolve(w: WaveField, pot: PotentialSpec, T: float, dt: float, phase_limit: float = PHASE_LIMIT):
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return schrodinger_step(w, pot, T / n, n, phase_limit)


def gaussian_wave(grid: GridSpec, center=0.0, sigma=1.0, momentum=0.0, hbar=1.0, mass=1.0) -> WaveField:
    """Normalised Gaussian packet with density variance ``sigma^2`` and mean momentum ``momentum``."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    k = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dim,))
    nodes = (grid.nodes,) if grid.dim == 1 else grid.nodes
    arg = sum(-((x - ci) ** 2) / (4 * sigma**2) + 1j * ki * x / hbar for x, ci, ki in zip(nodes, c, k))
    psi = np.exp(arg)
    psi /= math.sqrt(grid.integrate(np.abs(psi) ** 2))
    return WaveField(grid, psi, 0.0, hbar, mass)


def harmonic_ground_state(grid: GridSpec, mass=1.0, omega=1.0, hbar=1.0, center=0.0) -> WaveField:
    """Lowest eigenvector of the discrete harmonic Hamiltonian (1-D), positive and normalised.

    The discrete eigenvector is stationary under the grid propagator to
    rounding, unlike the continuum Gaussian which carries an O(dx^2) defect.
    """
    if grid.dim != 1:
        raise ConfigurationError("harmonic_ground_state is 1-D only")
    V = PotentialSpec.harmonic(mass, omega, center).values(grid)
    H = hamiltonian(grid, V, hbar, mass)
    d = H.diagonal().real
    e = H.diagonal(1).real
    _, vec = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    psi = np.abs(vec[:, 0])
    psi /= math.sqrt(grid.integrate(psi**2))
    return WaveField(grid, psi.astype(complex), 0.0, hbar, mass)


# ---------------------------------------------------------------------------
# wave-function map
# ---------------------------------------------------------------------------


def to_wavefunction(p: DensityField, Ftilde, hbar: float, mass: float = 1.0) -> WaveField:
    if not hbar > 0:
        raise ConfigurationError("hbar must be positive")
    Fv = _field(p.grid, Ftilde)
    return WaveField(p.grid, np.sqrt(p.values) * np.exp(-1j * Fv / hbar), p.time, hbar, mass)


def _phase_gradient(psi, axis, dx, periodic):
    """Derivative of ``arg psi`` from phase ratios, so no unwrapping is needed."""
    n = psi.shape[axis]

    def s(i):
        return np.take(psi, i, axis=axis)

    if periodic:
        return np.angle(np.roll(psi, -1, axis) * np.conj(np.roll(psi, 1, axis))) / (2 * dx)
    inner = np.angle(s(range(2, n)) * np.conj(s(range(0, n - 2)))) / (2 * dx)
    d1 = np.angle(s([1]) * np.conj(s([0])))
    d2 = np.angle(s([2]) * np.conj(s([1])))
    e1 = np.angle(s([n - 1]) * np.conj(s([n - 2])))
    e2 = np.angle(s([n - 2]) * np.conj(s([n - 3])))
    return np.concatenate([(3 * d1 - d2) / (2 * dx), inner, (3 * e1 - e2) / (2 * dx)], axis=axis)


def unwrapped_phase(w: WaveField) -> np.ndarray:
    """``arg psi`` made continuous along each axis (first axis first, from the origin corner)."""
    th = np.angle(w.values)
    if w.grid.dim == 1:
        return np.unwrap(th)
    th = np.unwrap(th, axis=1)
    col = np.unwrap(th[:, 0])
    return th + (col - th[:, 0])[:, None]


def from_wavefunction(w: WaveField, floor: float = NODE_FLOOR):
    """Density, velocity ``u = grad(Ft) / M`` and the shifted free energy ``Ft = -hbar * phase``."""
    p = np.abs(w.values) ** 2
    if np.any(p <= floor):
        raise NodeError("wave function has a node; the phase is undefined",
                        {"n_nodes": int(np.sum(p <= floor)), "floor": floor})
    grid = w.grid
    periodic = grid.boundary == "periodic"
    grads = [_phase_gradient(w.values, k, dk, periodic) for k, dk in enumerate(grid.spacing)]
    u = -(w.hbar / w.mass) * (grads[0] if grid.dim == 1 else np.stack(grads))
    Ft = -w.hbar * unwrapped_phase(w)
    return DensityField(grid, p, w.time), VelocityField(grid, u), Ft


def ftilde_from_velocity(u: VelocityField, mass: float) -> np.ndarray:
    """Integrate ``grad(Ft) = M u`` in 1-D with the trapezoid rule; the additive constant is fixed by ``Ft[0] = 0``."""
    if u.grid.dim != 1:
        raise ConfigurationError("ftilde_from_velocity is 1-D only")
    g = mass * u.values
    return np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * u.grid.dx)])


# ---------------------------------------------------------------------------
# action functional
# ---------------------------------------------------------------------------


def _log_mean(a, b):
    d = np.log(b) - np.log(a)
    small = np.abs(d) < 1e-6
    safe = np.where(small, 1.0, d)
    # series of a (e^d - 1) / d keeps w * d = b - a to rounding when d -> 0
    return np.where(small, a * (1 + d / 2 + d * d / 6), (b - a) / safe)


def action_functional(ps, Ftildes, pot: PotentialSpec, alpha: float, D: float, gamma: float, times=None,
                      p_min: float = P_MIN):
    """Both forms of the learning action for a density / shifted-free-energy series.

    ``form2`` is written in terms of ``F = Ft - log p / (2 alpha)`` and
    ``form3`` in terms of ``Ft``.  Spatial gradients use face differences with
    face-averaged density, integrated in time by the trapezoid rule.  Time
    derivatives use one-sided differences between snapshots weighted by the
    logarithmic mean of the density, for which ``w * (log p' - log p) = p' - p``
    holds exactly; the two forms then differ only by ``(M(T) - M(0)) / 2``
    with ``M`` the total mass, which is zero for normalised series.
    """
    if len(ps) < 2:
        raise ConfigurationError("need at least two snapshots")
    grid = ps[0].grid
    if any(p.grid != grid for p in ps):
        raise ConfigurationError("snapshots live on different grids")
    t = np.array([p.time for p in ps] if times is None else times, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ConfigurationError("snapshot times must increase")
    P = np.stack([p.values for p in ps])
    if np.any(P <= 0):
        warnings.warn(f"{int(np.sum(P <= 0))} density values at or below zero floored at {p_min:g}", RuntimeWarning, stacklevel=2)
        P = np.maximum(P, p_min)
    Ft = np.stack([_field(grid, f) for f in Ftildes])
    if Ft.shape != P.shape:
        raise ConfigurationError("Ftilde series does not match the density series")
    ell = np.log(P)
    F = Ft - ell / (2 * alpha)
    V = pot.values(grid)
    vol = grid.cell_volume

    s2 = np.zeros(len(ps))
    s3 = np.zeros(len(ps))
    for n in range(len(ps)):
        for k, dk in enumerate(grid.spacing):
            _, pbar = _face_diffs(P[n], grid, k)
            dl = _face_diffs(ell[n], grid, k)[0] / dk
            dF = _face_diffs(F[n], grid, k)[0] / dk
            dFt = _face_diffs(Ft[n], grid, k)[0] / dk
            s2[n] += np.sum(pbar * (D * dl * dl + gamma * dl * dF + alpha * gamma * dF * dF)) * vol
            s3[n] += np.sum(pbar * ((D - gamma / (4 * alpha)) * dl * dl + alpha * gamma * dFt * dFt)) * vol
        pv = alpha * np.sum(P[n] * V) * vol
        s2[n] += pv
        s3[n] += pv
    dt = np.diff(t)
    form2 = float(np.sum(0.5 * (s2[1:] + s2[:-1]) * dt))
    form3 = float(np.sum(0.5 * (s3[1:] + s3[:-1]) * dt))
    for n in range(len(ps) - 1):
        w = _log_mean(P[n], P[n + 1])
        form2 -= alpha * float(np.sum(w * (F[n + 1] - F[n]))) * vol
        form3 -= alpha * float(np.sum(w * (Ft[n + 1] - Ft[n]))) * vol
    return form2, form3


def action_variation(ps, Ftildes, pot: PotentialSpec, alpha, D, gamma, dp, dF, eps=1e-6, times=None) -> float:
    """Central-difference Gateaux derivative of the completed-square action along ``(dp, dF)``.

    ``dp`` and ``dF`` are arrays shaped like the stacked series; keep them zero
    at the first and last snapshot so the variation has fixed endpoints.
    """
    t = [p.time for p in ps] if times is None else times
    P = np.stack([p.values for p in ps])
    Ft = np.stack([_field(ps[0].grid, f) for f in Ftildes])

    def S(e):
        series = [DensityField(ps[0].grid, P[n] + e * dp[n], t[n]) for n in range(len(ps))]
        return action_functional(series, Ft + e * dF, pot, alpha, D, gamma, t)[1]

    return (S(eps) - S(-eps)) / (2 * eps)


def compare_densities(a: DensityField, b: DensityField) -> float:
    """L1 distance ``int |a - b|`` with the grid quadrature."""
    if a.grid != b.grid:
        raise ConfigurationError("densities live on different grids")
    return a.grid.integrate(np.abs(a.values - b.values))


def random_smooth_series(grid: GridSpec, rng: np.random.Generator, n_t: int = 9, T: float = 1.0, modes: int = 4):
    """Normalised densities and free energies built from ``modes`` travelling Fourier modes (1-D).

    Returns ``(densities, F)`` with ``n_t`` snapshots evenly spaced on ``[0, T]``.
    """
    if grid.dim != 1:
        raise ConfigurationError("random_smooth_series is 1-D only")
    q = grid.nodes
    L = grid.extents[0][1] - grid.extents[0][0]
    a = rng.normal(size=(modes, 3))
    ps, Fs = [], []
    for t in np.linspace(0.0, T, n_t):
        ell = sum(a[k, 0] * np.cos(2 * np.pi * (k + 1) * q / L + a[k, 2] * t) for k in range(modes))
        p = np.exp(ell)
        ps.append(DensityField(grid, p / grid.integrate(p), t))
        Fs.append(sum(a[k, 1] * np.sin(2 * np.pi * (k + 1) * q / L - t) for k in range(modes)))
    return ps, Fs
