"""Langevin learning dynamics of trainable variables and the quantum-parameter algebra.

Replicas follow the Euler-Maruyama discretisation of

    dq = -gamma * dF/dq * dt + sqrt(2 D dt) * xi,

whose density obeys the drift-diffusion equation solved on a grid by
:func:`emergelab.solvers.fp_step`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, optimize

from .errors import ConfigurationError, DomainError, NumericalError, TuningError
from .grid import DensityField, GridSpec
from .rng import stream

P_MIN = 1e-30


@dataclass(frozen=True)
class LearningParams:
    gamma: float
    diffusion: float
    dt: float
    n_replicas: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.diffusion >= 0:
            raise ConfigurationError("diffusion must be non-negative")
        if int(self.n_replicas) < 1:
            raise ConfigurationError("n_replicas must be positive")
        if not np.isfinite(self.gamma):
            raise ConfigurationError("gamma must be finite")
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "diffusion", float(self.diffusion))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "n_replicas", int(self.n_replicas))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self):
        return {"gamma": self.gamma, "diffusion": self.diffusion, "dt": self.dt,
                "n_replicas": self.n_replicas, "seed": self.seed}


@dataclass(frozen=True)
class QuantumParams:
    alpha: float
    hbar: float
    mu: float
    mass: float

    @classmethod
    def from_learning(cls, lp: LearningParams, alpha: float, mu_sign: int = 1) -> "QuantumParams":
        """Mass ``1/(2 gamma)``, hbar from ``alpha`` and chemical potential ``+-2 pi hbar``."""
        if lp.gamma == 0:
            raise DomainError("gamma = 0 gives an infinite mass")
        h = hbar_of(alpha, lp.diffusion, lp.gamma)
        return cls(alpha=float(alpha), hbar=h, mu=math.copysign(2 * math.pi * h, mu_sign), mass=1.0 / (2 * lp.gamma))

    @classmethod
    def simple(cls, hbar=1.0, mass=1.0):
        """Parameters for solver tests where only hbar and M matter."""
        return cls(alpha=1.0, hbar=float(hbar), mu=2 * math.pi * float(hbar), mass=float(mass))


@dataclass(frozen=True)
class ReplicaEnsemble:
    positions: np.ndarray
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ConfigurationError("positions must have shape (n_replicas, K)")
        object.__setattr__(self, "positions", x)

    @property
    def n_replicas(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]


def initial_ensemble(lp: LearningParams, dim: int = 1, loc=0.0, scale=1.0) -> ReplicaEnsemble:
    """Gaussian initial replicas drawn from the ``"init"`` substream."""
    rng = stream(lp.seed, "init")
    x = np.asarray(loc, dtype=float) + np.asarray(scale, dtype=float) * rng.standard_normal((lp.n_replicas, dim))
    return ReplicaEnsemble(x)


def langevin_step(ens: ReplicaEnsemble, grad_f: Callable[[np.ndarray], np.ndarray], lp: LearningParams) -> ReplicaEnsemble:
    """One Euler-Maruyama step; noise for step ``k`` comes from substream ``(seed, "langevin", k)``."""
    g = np.broadcast_to(np.asarray(grad_f(ens.positions), dtype=float), ens.positions.shape)
    bad = ~np.all(np.isfinite(g), axis=1)
    if bad.any():
        raise NumericalError("free-energy gradient is not finite",
                             {"step": ens.step, "replicas": np.flatnonzero(bad)[:20].tolist(), "n_bad": int(bad.sum())})
    x = ens.positions - lp.gamma * g * lp.dt
    if lp.diffusion > 0:
        xi = stream(lp.seed, "langevin", ens.step).standard_normal(ens.positions.shape)
        x = x + math.sqrt(2 * lp.diffusion * lp.dt) * xi
    return ReplicaEnsemble(x, ens.time + lp.dt, ens.step + 1)


def langevin_run(ens: ReplicaEnsemble, grad_f, lp: LearningParams, n_steps: int, callback=None) -> ReplicaEnsemble:
    for _ in range(int(n_steps)):
        ens = langevin_step(ens, grad_f, lp)
        if callback is not None:
            callback(ens)
    return ens


def substrate_gradient(septuple, h=1e-3, n_samples=1000, seed=0, V_term=None):
    """Gradient evaluator backed by the Monte Carlo free energy of a network.

    Replica positions are full trainable vectors; each replica costs
    ``2 K`` free-energy evaluations.
    """
    from .substrate import free_energy_gradient

    def grad(X):
        return np.stack([free_energy_gradient(septuple, q, h, n_samples, seed, V_term) for q in X])

    return grad


# ---------------------------------------------------------------------------
# densities and entropy
# ---------------------------------------------------------------------------


def _cic_weights(x, grid: GridSpec, k: int):
    """Lower node index and upper-node weight for cloud-in-cell deposit along axis ``k``."""
    lo, hi = grid.extents[k]
    n = grid.resolution[k]
    dx = (hi - lo) / n
    s = (x - lo) / dx - 0.5
    i = np.floor(s).astype(np.int64)
    f = s - i
    if grid.boundary == "periodic":
        return np.mod(i, n), np.mod(i + 1, n), f
    # half cells next to the walls deposit onto the wall node
    i0 = np.clip(i, 0, n - 1)
    i1 = np.clip(i + 1, 0, n - 1)
    return i0, i1, f


def _inside(X, grid: GridSpec):
    if grid.boundary == "periodic":
        return np.ones(X.shape[0], dtype=bool)
    ok = np.ones(X.shape[0], dtype=bool)
    for k, (lo, hi) in enumerate(grid.extents):
        ok &= (X[:, k] >= lo) & (X[:, k] <= hi)
    return ok


def empirical_density(ens: ReplicaEnsemble, grid: GridSpec, bandwidth: float | None = None) -> DensityField:
    """Cloud-in-cell histogram of the replicas, optionally smoothed by a Gaussian kernel.

    On a periodic grid positions wrap.  On a reflecting grid samples outside
    the extents are dropped and their fraction is stored as ``mass_deficit``;
    the remaining mass is normalised to one.
    """
    X = ens.positions
    if X.shape[1] != grid.dim:
        raise ConfigurationError(f"ensemble dimension {X.shape[1]} does not match grid dimension {grid.dim}")
    if grid.boundary == "periodic":
        X = X.copy()
        for k, (lo, hi) in enumerate(grid.extents):
            X[:, k] = lo + np.mod(X[:, k] - lo, hi - lo)
    ok = _inside(X, grid)
    deficit = 1.0 - ok.sum() / X.shape[0]
    X = X[ok]
    if X.shape[0] == 0:
        raise NumericalError("no replicas inside the grid", {"mass_deficit": deficit})
    h = np.zeros(grid.shape)
    if grid.dim == 1:
        i0, i1, f = _cic_weights(X[:, 0], grid, 0)
        h += np.bincount(i0, 1 - f, grid.shape[0])
        h += np.bincount(i1, f, grid.shape[0])
    else:
        a0, a1, fa = _cic_weights(X[:, 0], grid, 0)
        b0, b1, fb = _cic_weights(X[:, 1], grid, 1)
        ny = grid.shape[1]
        for ia, wa in ((a0, 1 - fa), (a1, fa)):
            for ib, wb in ((b0, 1 - fb), (b1, fb)):
                h += np.bincount(ia * ny + ib, wa * wb, h.size).reshape(grid.shape)
    if bandwidth:
        sig = [bandwidth / d for d in grid.spacing]
        h = ndimage.gaussian_filter(h, sig, mode="wrap" if grid.boundary == "periodic" else "reflect", truncate=6.0)
    h = np.maximum(h, 0.0)
    h /= h.sum() * grid.cell_volume
    return DensityField(grid, h, ens.time, float(deficit))


def _floored_log(values, p_min):
    v = np.asarray(values, dtype=float)
    low = v <= 0
    if low.any():
        warnings.warn(f"{int(low.sum())} density values at or below zero floored at {p_min:g}", RuntimeWarning, stacklevel=3)
    return np.log(np.maximum(v, p_min))


def shannon_entropy(p: DensityField, p_min: float = P_MIN) -> float:
    v = p.values
    return -p.grid.integrate(np.where(v > 0, v * np.log(np.maximum(v, p_min)), 0.0))


def _face_diffs(a, grid: GridSpec, axis: int):
    if grid.boundary == "periodic":
        return np.roll(a, -1, axis=axis) - a, 0.5 * (np.roll(a, -1, axis=axis) + a)
    hi = np.take(a, np.arange(1, a.shape[axis]), axis=axis)
    lo = np.take(a, np.arange(0, a.shape[axis] - 1), axis=axis)
    return hi - lo, 0.5 * (hi + lo)


def entropy_production_rate(p: DensityField, F, lp: LearningParams, p_min: float = P_MIN) -> float:
    """``int p [D (dlog p)^2 + gamma dlog p . dF]`` with face-centred differences.

    With the conservative flux of the grid solver this equals the exact rate
    of change of the discrete Shannon entropy, because the sum is the
    summation-by-parts image of ``-sum (dp/dt) log p``.
    """
    grid = p.grid
    ell = _floored_log(p.values, p_min)
    Fv = np.broadcast_to(np.asarray(F, dtype=float), grid.shape)
    total = 0.0
    for k, dk in enumerate(grid.spacing):
        dp, pbar = _face_diffs(p.values, grid, k)
        dl, _ = _face_diffs(ell, grid, k)
        dF, _ = _face_diffs(Fv, grid, k)
        total += np.sum(lp.diffusion * (dp / dk) * (dl / dk) + lp.gamma * pbar * (dF / dk) * (dl / dk))
    return float(total * grid.cell_volume)


def entropy_production_trainable(ps: Sequence[DensityField], Fs, lp: LearningParams, times=None,
                                 p_min: float = P_MIN) -> float:
    """Time integral of :func:`entropy_production_rate` over a density series (trapezoid rule).

    ``Fs`` is one field for a static free energy or one per snapshot.
    ``times`` defaults to the snapshot times.
    """
    if len(ps) < 2:
        raise ConfigurationError("need at least two snapshots")
    grid = ps[0].grid
    if any(p.grid != grid for p in ps):
        raise ConfigurationError("snapshots live on different grids")
    Fv = np.asarray(Fs, dtype=float)
    per_step = Fv.shape[: 1] == (len(ps),) and Fv.ndim == grid.dim + 1
    t = np.array([p.time for p in ps] if times is None else times, dtype=float)
    rates = np.array([entropy_production_rate(p, Fv[n] if per_step else Fv, lp, p_min) for n, p in enumerate(ps)])
    return float(np.sum(0.5 * (rates[1:] + rates[:-1]) * np.diff(t)))


# ---------------------------------------------------------------------------
# quantum-parameter algebra
# ---------------------------------------------------------------------------


def alpha_roots(D: float, gamma: float, mu: float):
    """Roots of ``(mu/2pi)^2 a^2 - (4D/gamma) a + 1 = 0``, or ``None`` when they are complex."""
    if mu == 0:
        raise DomainError("mu must be non-zero")
    if gamma == 0:
        raise DomainError("gamma must be non-zero")
    r = 2 * D / gamma
    m2 = (mu / (2 * math.pi)) ** 2
    disc = r * r - m2
    if disc < 0:
        if disc >= -1e-12 * r * r:
            # rounding at the double root
            disc = 0.0
        else:
            return None
    big = r + math.copysign(math.sqrt(disc), r)
    if big == 0:
        return None
    a1 = big / m2
    # Vieta avoids cancellation in the small root
    a2 = 1.0 / (m2 * a1)
    return (max(a1, a2), min(a1, a2))


def is_double_root(D: float, gamma: float, mu: float, rtol: float = 1e-12) -> bool:
    r = abs(2 * D / gamma)
    m = abs(mu / (2 * math.pi))
    return abs(r - m) <= rtol * max(r, m)


def quadratic_residual(alpha: float, D: float, gamma: float, mu: float) -> float:
    """Relative residual of the alpha quadratic."""
    m2 = (mu / (2 * math.pi)) ** 2
    terms = (m2 * alpha * alpha, 4 * D / gamma * alpha, 1.0)
    return abs(terms[0] - terms[1] + terms[2]) / max(abs(t) for t in terms)


def hbar_of(alpha: float, D: float, gamma: float) -> float:
    if alpha == 0 or gamma == 0:
        raise DomainError("alpha and gamma must be non-zero")
    x = 4 * D * alpha / gamma
    if x - 1 < 0:
        # rounding at the double root
        if x - 1 > -1e-12 * max(abs(x), 1.0):
            return 0.0
        raise DomainError(f"4 D alpha / gamma = {x:g} < 1 gives a non-real hbar")
    return math.sqrt(x - 1) / alpha


def saturation(lp: LearningParams, mu: float) -> float:
    """``|gamma mu / D| / 4 pi``; equal to one on the saturation boundary."""
    return abs(lp.gamma * mu / lp.diffusion) / (4 * math.pi)


def tune_parameters(lp: LearningParams, target_hbar: float, policy: str = "gamma", bounds=None,
                    mu_sign: int = 1, rtol: float = 1e-12) -> LearningParams:
    """Adjust one knob so that ``|gamma mu / D| = 4 pi`` with ``mu = +-2 pi hbar`` held fixed.

    ``policy`` picks the knob (``"gamma"`` or ``"D"``); the other one and the
    sign of gamma are kept.  The root is bracketed inside ``bounds``
    (default: the current value times ``[1e-6, 1e6]``) and solved with Brent's
    method.
    """
    if not target_hbar > 0:
        raise ConfigurationError("target_hbar must be positive")
    if policy not in ("gamma", "D"):
        raise ConfigurationError("policy must be 'gamma' or 'D'")
    mu = math.copysign(2 * math.pi * target_hbar, mu_sign)
    if lp.diffusion > 0 and abs(saturation(lp, mu) - 1) <= rtol:
        return lp
    if policy == "gamma":
        if lp.diffusion == 0:
            raise TuningError("D = 0 cannot be saturated by changing gamma")
        cur = abs(lp.gamma) if lp.gamma != 0 else 1.0
        sign = -1.0 if lp.gamma < 0 else 1.0

        def resid(x):
            return math.log(x * abs(mu) / lp.diffusion / (4 * math.pi))
    else:
        if lp.gamma == 0:
            raise TuningError("gamma = 0 cannot be saturated by changing D")
        cur = lp.diffusion if lp.diffusion > 0 else 1.0

        def resid(x):
            return math.log(abs(lp.gamma * mu) / x / (4 * math.pi))

    lo, hi = bounds if bounds is not None else (cur * 1e-6, cur * 1e6)
    if not 0 < lo < hi:
        raise ConfigurationError("bounds must satisfy 0 < lo < hi")
    if resid(lo) * resid(hi) > 0:
        raise TuningError(f"saturation not reachable for {policy} in [{lo:g}, {hi:g}]")
    x = optimize.brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    out = replace(lp, gamma=sign * x) if policy == "gamma" else replace(lp, diffusion=x)
    if abs(saturation(out, mu) - 1) > 1e-9:
        raise TuningError("bisection did not reach the saturation tolerance")
    return out
