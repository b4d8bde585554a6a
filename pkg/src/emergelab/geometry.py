"""Per-neuron geometry: displacements, the entropic clock, local metrics and Lorentz maps.

Indices run over ``(0, 1, 2, 3)`` with signature ``eta = diag(-1, 1, 1, 1)``.
The entropy production of a displacement four-vector is ``-g_{mu nu} v^mu v^nu``,
so timelike displacements produce entropy and spacelike ones destroy it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.ndimage import uniform_filter1d

from .errors import ConfigurationError, DomainError

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
EPS_MIN = 1e-6
NULL_BAND = 1e-12
LORENTZ_TOL = 1e-12
COMPONENT_NAMES = ("g11", "g22", "g33", "g12", "g13", "g23")


def as_four_vector(v):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (4,):
        raise ConfigurationError(f"a four-vector needs 4 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("four-vector components must be finite")
    return arr


def _as_metric(g):
    arr = np.asarray(g, dtype=float)
    if arr.shape != (4, 4):
        raise ConfigurationError(f"metric must be 4x4, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class NeuronTrajectory:
    """Time series of one neuron's scalar state, cycling through ``period`` phases."""

    samples: np.ndarray
    period: int = 3

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if self.period < 1:
            raise ConfigurationError("period must be a positive integer")
        if s.size < 2 * self.period:
            raise DomainError(f"trajectory of length {s.size} is shorter than two periods ({2 * self.period})")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "period", int(self.period))


def displacements(tr: NeuronTrajectory):
    """Displacement triples ``xdot^a = (x(s + d) - x(s)) / d``.

    Sample ``s`` belongs to component ``s mod d``; the triple for window ``t``
    collects the ``d`` consecutive samples ``t .. t+d-1``.  Returns shape
    ``(len - 2d + 1, d)``.
    """
    x, d = tr.samples, tr.period
    inc = (x[d:] - x[:-d]) / d
    n_win = x.size - 2 * d + 1
    out = np.empty((n_win, d))
    for t in range(n_win):
        for j in range(d):
            out[t, (t + j) % d] = inc[t + j]
    return out


def estimate_sigma_plus(samples, window=9):
    """Windowed mean square of the detrended increments of ``samples``.

    One value per increment; the moving mean is removed before squaring so a
    steady drift does not register as stochastic production.
    """
    inc = np.diff(np.asarray(samples, dtype=float))
    if inc.size == 0:
        raise DomainError("need at least two samples")
    window = max(1, min(int(window), inc.size))
    detrended = inc - uniform_filter1d(inc, window, mode="nearest")
    return uniform_filter1d(detrended**2, window, mode="nearest")


def x0_clock(sigma_plus, dt=1.0):
    """``x0(t) = int_0^t sqrt(sigma_plus)`` by the cumulative trapezoid rule."""
    s = np.asarray(sigma_plus, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        bad = int(np.flatnonzero(~(s >= 0))[0])
        raise DomainError(f"sigma_plus must be non-negative and finite (index {bad} is {s[bad]})")
    return cumulative_trapezoid(np.sqrt(s), dx=dt, initial=0.0)


@dataclass
class LocalFrame:
    """One neuron: spatial position, local spatial metric and optional clock series."""

    position: np.ndarray
    g_spatial: np.ndarray
    x0_series: np.ndarray | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        g = np.asarray(self.g_spatial, dtype=float).reshape(3, 3)
        if not np.allclose(g, g.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
            raise ConfigurationError("g_spatial must be symmetric")
        g = 0.5 * (g + g.T)
        lam = np.linalg.eigvalsh(g)
        if lam[0] < EPS_MIN:
            raise ConfigurationError(f"g_spatial must be positive definite with eigenvalues >= {EPS_MIN}, "
                                     f"smallest is {lam[0]:g}")
        self.g_spatial = g
        if self.x0_series is not None:
            x0 = np.asarray(self.x0_series, dtype=float)
            if np.any(np.diff(x0) < 0):
                raise ConfigurationError("x0_series must be non-decreasing")
            self.x0_series = x0


def entropy_production_neuron(v, g):
    """``-g_{mu nu} v^mu v^nu``."""
    v = as_four_vector(v)
    return float(-(v @ _as_metric(g) @ v))


def _design(displ):
    x = np.asarray(displ, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ConfigurationError(f"displacements must have shape (n, 3), got {x.shape}")
    return np.column_stack([x[:, 0]**2, x[:, 1]**2, x[:, 2]**2,
                            2 * x[:, 0] * x[:, 1], 2 * x[:, 0] * x[:, 2], 2 * x[:, 1] * x[:, 2]])


@dataclass
class MetricFit:
    g: np.ndarray
    residual: float
    clipped: bool


def fit_local_metric(displ, destruction, eps_min=EPS_MIN, full_output=False):
    """Least-squares fit of ``sigma_minus ~ -g_ab xdot^a xdot^b`` for a 3x3 SPD ``g``.

    The raw symmetric solution is projected onto ``eigenvalues >= eps_min``.
    With ``full_output`` a :class:`MetricFit` carrying the RMS residual of the
    unprojected fit is returned instead of the bare matrix.
    """
    A = _design(displ)
    y = -np.asarray(destruction, dtype=float).ravel()
    if y.size != A.shape[0]:
        raise ConfigurationError("need one destruction value per displacement")
    if A.shape[0] < 6:
        raise DomainError(f"need at least 6 samples to identify 6 metric components, got {A.shape[0]}")
    scale = np.abs(A).max(axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    _, s, vt = np.linalg.svd(As, full_matrices=False)
    tol = s.max(initial=0.0) * max(As.shape) * np.finfo(float).eps
    null = vt[s <= tol] if s.max(initial=0.0) > 0 else np.eye(6)
    if null.shape[0]:
        bad = sorted({COMPONENT_NAMES[k] for row in null for k in np.flatnonzero(np.abs(row) > 1e-8)})
        raise DomainError(f"rank-deficient displacement design; unidentifiable components: {', '.join(bad)}")
    coef = np.linalg.lstsq(As, y, rcond=None)[0] / scale
    g = np.array([[coef[0], coef[3], coef[4]],
                  [coef[3], coef[1], coef[5]],
                  [coef[4], coef[5], coef[2]]])
    resid = float(np.sqrt(np.mean((A @ coef - y)**2)))
    lam, vec = np.linalg.eigh(g)
    clipped = bool(lam[0] < eps_min)
    if clipped:
        g = (vec * np.maximum(lam, eps_min)) @ vec.T
        g = 0.5 * (g + g.T)
    if full_output:
        return MetricFit(g, resid, clipped)
    return g


@dataclass(frozen=True)
class LorentzMap:
    """``x' = Lambda x + shift``; the matrix must preserve ``eta``."""

    matrix: np.ndarray
    shift: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        L = np.asarray(self.matrix, dtype=float)
        if L.shape != (4, 4) or not np.all(np.isfinite(L)):
            raise ConfigurationError("Lorentz matrix must be a finite 4x4 array")
        defect = np.abs(L.T @ ETA @ L - ETA).max()
        if defect > LORENTZ_TOL * max(1.0, float(np.abs(L).max())**2):
            raise ConfigurationError(f"matrix is not a Lorentz transformation (|L^T eta L - eta| = {defect:.3g})")
        object.__setattr__(self, "matrix", L)
        object.__setattr__(self, "shift", as_four_vector(self.shift))

    @classmethod
    def identity(cls):
        return cls(np.eye(4))

    @classmethod
    def boost(cls, velocity, shift=None):
        """Pure boost with 3-velocity ``velocity`` (units of c), |v| < 1."""
        b = np.asarray(velocity, dtype=float).reshape(3)
        v2 = float(b @ b)
        if v2 >= 1.0:
            raise DomainError(f"boost speed must be below 1, got {np.sqrt(v2):g}")
        gam = 1.0 / np.sqrt(1.0 - v2)
        L = np.eye(4)
        L[0, 0] = gam
        L[0, 1:] = L[1:, 0] = -gam * b
        if v2 > 0:
            L[1:, 1:] += (gam - 1.0) * np.outer(b, b) / v2
        return cls(L, np.zeros(4) if shift is None else shift)

    @classmethod
    def rotation(cls, axis, angle, shift=None):
        """Spatial rotation by ``angle`` about ``axis`` (Rodrigues)."""
        k = np.asarray(axis, dtype=float).reshape(3)
        k = k / np.linalg.norm(k)
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        R = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
        L = np.eye(4)
        L[1:, 1:] = R
        return cls(L, np.zeros(4) if shift is None else shift)

    def compose(self, other: LorentzMap):
        """``self`` after ``other``."""
        return LorentzMap(self.matrix @ other.matrix, self.matrix @ other.shift + self.shift)

    def apply_point(self, x):
        return self.matrix @ as_four_vector(x) + self.shift


def lorentz_apply(L: LorentzMap, v, g):
    """Transform a displacement and a metric: ``v' = Lambda v``, ``g' = Lambda^-T g Lambda^-1``.

    Displacements are differences of positions, so the shift drops out here;
    use :meth:`LorentzMap.apply_point` for positions.
    """
    v = as_four_vector(v)
    g = _as_metric(g)
    Linv = np.linalg.inv(L.matrix)
    return L.matrix @ v, Linv.T @ g @ Linv


def classify(v, g, band=NULL_BAND):
    """'timelike' when entropy is produced, 'spacelike' when destroyed, 'null' inside the band."""
    s = -entropy_production_neuron(v, g)
    if abs(s) <= band:
        return "null"
    return "timelike" if s < 0 else "spacelike"


def random_boost(rng, vmax=0.9):
    """Boost with direction uniform on the sphere and speed uniform in ``[0, vmax]``."""
    n = rng.standard_normal(3)
    n /= np.linalg.norm(n)
    return LorentzMap.boost(n * vmax * rng.uniform())

