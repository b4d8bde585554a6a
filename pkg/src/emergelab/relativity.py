"""Lattice tensor calculus: Christoffel symbols, Ricci tensor, actions, geodesics and Einstein residuals.

Every derivative is a second-order central difference.  Periodic axes wrap;
on a non-periodic axis the outermost nodes have no stencil and are flagged
invalid, since one-sided stencils would break the summation-by-parts identity
between the two action forms.  Flags propagate: a Ricci node needs valid
Christoffel neighbours, which need valid (non-empty) metric neighbours.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .errors import ConfigurationError, DomainError
from .metric import Lattice, MetricField
from .rng import stream


def _diff(a, axis, lat: Lattice):
    """Central difference of ``a`` along lattice axis ``axis`` (zero on static axes)."""
    if lat.shape[axis] == 1:
        return np.zeros_like(a)
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * lat.spacing[axis])


def _stencil_valid(valid, lat: Lattice):
    out = valid.copy()
    for k in range(4):
        n = lat.shape[k]
        if n == 1:
            continue
        out &= np.roll(valid, 1, axis=k) & np.roll(valid, -1, axis=k)
        if not lat.periodic[k]:
            idx = [slice(None)] * 4
            idx[k] = 0
            out[tuple(idx)] = False
            idx[k] = n - 1
            out[tuple(idx)] = False
    return out


@dataclass
class ChristoffelField:
    """``gamma[..., mu, alpha, beta] = Gamma^mu_{alpha beta}``; ``valid`` marks nodes with full stencil support."""

    lattice: Lattice
    gamma: np.ndarray
    valid: np.ndarray

    def at(self, index):
        return self.gamma[index]


def christoffel(mf: MetricField):
    lat = mf.lattice
    g = mf.g
    dg = np.stack([_diff(g, k, lat) for k in range(4)], axis=-1)  # [..., n, a, b] = d_b g_na
    low = 0.5 * (dg + np.swapaxes(dg, -1, -2) - np.moveaxis(dg, -1, -3))
    gam = np.einsum("...mn,...nab->...mab", mf.g_inv, low)
    gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
    valid = _stencil_valid(~mf.empty, lat)
    gam[~valid] = np.nan
    return ChristoffelField(lat, gam, valid)


@dataclass
class RicciField:
    lattice: Lattice
    R: np.ndarray
    valid: np.ndarray
    asymmetry: float


def _ricci_raw(gam, lat):
    trace = np.einsum("...mam->...a", gam)  # Gamma^mu_{alpha mu}
    R = sum(_diff(gam[..., m, :, :], m, lat) for m in range(4))
    R = R - np.stack([_diff(trace, b, lat) for b in range(4)], axis=-1)
    R = R + np.einsum("...mab,...m->...ab", gam, trace)
    R = R - np.einsum("...mag,...gbm->...ab", gam, gam)
    return R, trace


def ricci(mf: MetricField, chris: ChristoffelField | None = None):
    """``R_ab = d_mu Gamma^mu_ab - d_b Gamma^mu_amu + Gamma^mu_ab Gamma^g_gmu - Gamma^mu_ag Gamma^g_bmu``."""
    chris = christoffel(mf) if chris is None else chris
    lat = mf.lattice
    gam = np.where(chris.valid[..., None, None, None], chris.gamma, 0.0)
    R, _ = _ricci_raw(gam, lat)
    valid = _stencil_valid(chris.valid, lat)
    asym = float(np.abs(R - np.swapaxes(R, -1, -2))[valid].max(initial=0.0))
    R = 0.5 * (R + np.swapaxes(R, -1, -2))
    R[~valid] = np.nan
    return RicciField(lat, R, valid, asym)


@dataclass
class ActionReport:
    gamma_gamma_value: float
    ricci_value: float
    lambda_: float = 0.0
    n_bar: float = 0.0
    volume: float = 0.0
    total: float = 0.0
    valid_nodes: int = 0

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d


def _action_parts(mf: MetricField):
    lat = mf.lattice
    chris = christoffel(mf)
    ric = ricci(mf, chris)
    gam = np.where(chris.valid[..., None, None, None], chris.gamma, 0.0)
    trace = np.einsum("...mam->...a", gam)
    P = mf.sqrt_minus_g[..., None, None] * mf.g_inv
    term2 = sum(np.einsum("...ab,...ab->...", gam[..., m, :, :], _diff(P, m, lat)) for m in range(4))
    lag_gg = -0.5 * (mf.sqrt_minus_g * np.einsum("...ab,...mab,...m->...", mf.g_inv, gam, trace) + term2)
    Rs = np.where(ric.valid[..., None, None], ric.R, 0.0)
    lag_r = mf.sqrt_minus_g * np.einsum("...ab,...ab->...", mf.g_inv, Rs)
    return lag_gg, lag_r, ric.valid


def eh_action(mf: MetricField):
    """Both bulk forms of the gravitational action over nodes where the Ricci tensor is valid."""
    lag_gg, lag_r, valid = _action_parts(mf)
    vol = mf.integrate(mf.sqrt_minus_g)
    gg = mf.integrate(lag_gg, valid)
    rr = mf.integrate(lag_r, valid)
    return ActionReport(gg, rr, 0.0, 0.0, vol, rr, int(valid.sum()))


def lambda_functional(mf: MetricField, lam, n_bar):
    """``int sqrt(-g) (g^ab R_ab - 2 Lambda) + 2 Lambda n_bar``."""
    rep = eh_action(mf)
    rep.lambda_ = float(lam)
    rep.n_bar = float(n_bar)
    rep.total = rep.ricci_value - 2.0 * lam * rep.volume + 2.0 * lam * n_bar
    return rep


@dataclass
class EinsteinResidual:
    residual: np.ndarray
    density: np.ndarray
    valid: np.ndarray

    def norm(self):
        return float(np.abs(self.residual[self.valid]).max(initial=0.0))


def einstein_residual(mf: MetricField, lam=0.0, ric: RicciField | None = None):
    """``R_mn - (g^ab R_ab) g_mn / 2 + Lambda g_mn``; ``density`` carries the extra ``sqrt(-g)``."""
    ric = ricci(mf) if ric is None else ric
    Rs = np.where(ric.valid[..., None, None], ric.R, 0.0)
    scal = np.einsum("...ab,...ab->...", mf.g_inv, Rs)
    E = Rs - 0.5 * scal[..., None, None] * mf.g + lam * mf.g
    E[~ric.valid] = np.nan
    return EinsteinResidual(E, mf.sqrt_minus_g[..., None, None] * E, ric.valid)


def _patch(mf: MetricField, center, radius):
    """Sub-field of half-width ``radius`` around ``center`` (wrapping periodic axes) as a non-periodic lattice."""
    lat = mf.lattice
    idx = []
    for k in range(4):
        n = lat.shape[k]
        if n == 1:
            idx.append(np.array([0]))
            continue
        r = np.arange(center[k] - radius, center[k] + radius + 1)
        if lat.periodic[k]:
            r %= n
        elif r[0] < 0 or r[-1] >= n:
            raise DomainError(f"node {tuple(center)} is too close to the edge of non-periodic axis {k}")
        idx.append(r)
    ix = np.ix_(*idx)
    shape = tuple(len(i) for i in idx)
    origin = tuple(lat.origin[k] + (idx[k][0] if lat.shape[k] > 1 else 0) * lat.spacing[k] for k in range(4))
    sub = Lattice(origin, lat.spacing, shape, (False,) * 4)
    return sub, mf.g[ix], mf.g_inv[ix], mf.sqrt_minus_g[ix]


def _local_action(sub, g, gi, lam):
    vol = np.sqrt(-np.linalg.det(g))
    mf = MetricField(sub, g, gi, vol, synchronous=False)
    _, lag_r, valid = _action_parts(mf)
    dens = lag_r - 2.0 * lam * vol
    return float(dens[valid].sum() * sub.cell_volume), int(valid.sum())


@dataclass
class VariationCheck:
    max_error: float
    scale: float
    relative: float
    samples: list = field(default_factory=list)


def einstein_variation_check(mf: MetricField, lam=0.0, nodes=None, n_nodes=6, seed=0, step=1e-5,
                             components=None):
    """Central-difference ``dS/dg^{mn}`` at sampled nodes versus the assembled residual density.

    ``S = int sqrt(-g) (g^ab R_ab - 2 Lambda)``.  A node value of ``g^{mn}``
    (together with ``g^{nm}``) is perturbed, the node metric and volume factor
    are recomputed from it, and the action change is evaluated on the local
    stencil patch, which is all the perturbation can reach.  Off-diagonal
    perturbations move two entries and therefore measure twice the residual.
    """
    lat = mf.lattice
    res = einstein_residual(mf, lam)
    if nodes is None:
        rng = stream(seed, "variation-nodes")
        cand = np.argwhere(res.valid)
        nodes = [tuple(int(v) for v in cand[i]) for i in rng.choice(len(cand), size=min(n_nodes, len(cand)),
                                                                    replace=False)]
    if components is None:
        static_t = lat.shape[0] == 1
        components = [(a, b) for a in range(4) for b in range(a, 4) if not (static_t and a == 0 and b > 0)]
    radius = 4
    samples = []
    for node in nodes:
        sub, g, gi, _ = _patch(mf, node, radius)
        c = tuple(radius if lat.shape[k] > 1 else 0 for k in range(4))
        for a, b in components:
            vals = []
            h = step * max(1.0, abs(gi[c][a, b]))
            for sgn in (1.0, -1.0):
                gi2 = gi.copy()
                gi2[c][a, b] += sgn * h
                if a != b:
                    gi2[c][b, a] += sgn * h
                g2 = g.copy()
                g2[c] = np.linalg.inv(gi2[c])
                g2[c] = 0.5 * (g2[c] + g2[c].T)
                vals.append(_local_action(sub, g2, gi2, lam)[0])
            fd = (vals[0] - vals[1]) / (2.0 * h) / lat.cell_volume
            expected = res.density[node][a, b] * (2.0 if a != b else 1.0)
            samples.append({"node": list(node), "component": [a, b], "fd": fd, "assembled": float(expected)})
    err = max(abs(s["fd"] - s["assembled"]) for s in samples)
    scale = max(abs(s["assembled"]) for s in samples)
    return VariationCheck(err, scale, err / scale if scale > 0 else float(err > 0), samples)


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------


@dataclass
class GeodesicPath:
    """Samples ``(t, x^a, dx^mu/dt, tau)`` along a worldline."""

    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    tau: np.ndarray
    exited: bool = False
    parameterization: str = "coordinate"
    stats: dict = field(default_factory=dict)

    def rows(self):
        return np.column_stack([self.t, self.x, self.xdot, self.tau])

    HEADER = ("t", "x1", "x2", "x3", "xdot0", "xdot1", "xdot2", "xdot3", "tau")


class _Interpolant:
    """Multilinear interpolation of Gamma (64 comps) and g (16 comps) together."""

    def __init__(self, mf: MetricField, chris: ChristoffelField | None = None):
        chris = christoffel(mf) if chris is None else chris
        lat = mf.lattice
        n = lat.shape
        vals = np.concatenate([chris.gamma.reshape(n + (64,)), mf.g.reshape(n + (16,))], axis=-1)
        vals[~chris.valid] = np.nan
        self.values = np.ascontiguousarray(vals)
        self.lattice = lat
        self.origin = np.array(lat.origin)
        self.spacing = np.array(lat.spacing)
        self.periodic = np.array(lat.periodic)
        lo = self.origin
        hi = self.origin + (np.array(n) - 1) * self.spacing
        self.lo = np.where((np.array(n) > 1) & ~self.periodic, lo, -np.inf)
        self.hi = np.where((np.array(n) > 1) & ~self.periodic, hi, np.inf)

    def inside(self, X):
        return bool(np.all(X >= self.lo) and np.all(X <= self.hi))

    def __call__(self, X):
        out = kernels.interp_multilinear(self.values, self.origin, self.spacing, self.periodic, X)
        return out[:64].reshape(4, 4, 4), out[64:].reshape(4, 4)


def _norm(g, u):
    return float(u @ g @ u)


def geodesic_integrate(mf: MetricField, x0, v0, T, dt=1e-2, parameterization="coordinate", chris=None,
                       record_every=1):
    """RK4 geodesic from event ``x0`` with initial 4-velocity ``v0`` for coordinate duration ``T``.

    ``coordinate``: ``d2x/dt2 = (Gamma^0_ab xdot^mu - Gamma^mu_ab) xdot^a xdot^b`` with
    ``x^0 = t``.  ``proper``: ``d2x/dtau2 = -Gamma^mu_ab u^a u^b`` with ``u``
    normalised to ``g(u, u) = -1``; ``dt`` is then the proper-time step and the
    run stops once ``x^0`` has advanced by ``T``.  Leaving the lattice or
    reaching a flagged node truncates the path with ``exited=True``.
    """
    ip = _Interpolant(mf, chris)
    X = np.asarray(x0, dtype=float).reshape(4).copy()
    v = np.asarray(v0, dtype=float).reshape(4).copy()
    if not ip.inside(X):
        raise DomainError(f"initial event {X} lies outside the lattice")
    G0, g0 = ip(X)
    if not np.all(np.isfinite(G0)):
        raise DomainError(f"initial event {X} lies in a region without stencil support")
    if parameterization not in ("coordinate", "proper"):
        raise ConfigurationError("parameterization must be 'coordinate' or 'proper'")

    if parameterization == "coordinate":
        if v[0] <= 0:
            raise DomainError("coordinate-time integration needs dx^0/dlambda > 0")
        y = np.concatenate([X[1:], v[1:] / v[0], [0.0]])

        def rhs(t, y):
            P = np.concatenate([[t], y[:3]])
            G, g = ip(P)
            xd = np.concatenate([[1.0], y[3:6]])
            quad = np.einsum("mab,a,b->m", G, xd, xd)
            acc = quad[0] * xd[1:] - quad[1:]
            return np.concatenate([y[3:6], acc, [np.sqrt(max(-_norm(g, xd), 0.0))]]), P

        t = X[0]
        t_end = X[0] + T
        n_steps = int(np.ceil(T / dt - 1e-12))
        h = T / n_steps
        ts, xs, vs, taus = [t], [y[:3].copy()], [np.concatenate([[1.0], y[3:6]])], [0.0]
        exited = False
        for k in range(n_steps):
            k1, _ = rhs(t, y)
            k2, _ = rhs(t + h / 2, y + h / 2 * k1)
            k3, _ = rhs(t + h / 2, y + h / 2 * k2)
            k4, _ = rhs(t + h, y + h * k3)
            y_new = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t_new = X[0] + (k + 1) * h
            P = np.concatenate([[t_new], y_new[:3]])
            if not (np.all(np.isfinite(y_new)) and ip.inside(P)):
                exited = True
                break
            y, t = y_new, t_new
            if (k + 1) % record_every == 0 or k + 1 == n_steps:
                ts.append(t)
                xs.append(y[:3].copy())
                vs.append(np.concatenate([[1.0], y[3:6]]))
                taus.append(y[6])
        return GeodesicPath(np.array(ts), np.array(xs), np.array(vs), np.array(taus), exited, "coordinate",
                            {"steps": len(ts) - 1, "dt": h, "t_end": float(t_end)})

    n0 = _norm(g0, v)
    if n0 >= 0:
        raise DomainError("proper-time integration needs a timelike initial velocity")
    u = v / np.sqrt(-n0)
    y = np.concatenate([X, u])

    def rhs_p(y):
        G, _ = ip(y[:4])
        return np.concatenate([y[4:], -np.einsum("mab,a,b->m", G, y[4:], y[4:])])

    h = dt
    tau = 0.0
    t_end = X[0] + T
    ts, xs, vs, taus, norms = [y[0]], [y[1:4].copy()], [y[4:] / y[4]], [0.0], [_norm(g0, y[4:])]
    exited = False
    max_steps = int(1e7)
    for _ in range(max_steps):
        if y[0] >= t_end - 1e-14:
            break
        step = h
        if y[0] + step * y[4] > t_end:
            step = (t_end - y[0]) / y[4]
        k1 = rhs_p(y)
        k2 = rhs_p(y + step / 2 * k1)
        k3 = rhs_p(y + step / 2 * k2)
        k4 = rhs_p(y + step * k3)
        y_new = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not (np.all(np.isfinite(y_new)) and ip.inside(y_new[:4])):
            exited = True
            break
        y = y_new
        tau += step
        _, g = ip(y[:4])
        ts.append(y[0])
        xs.append(y[1:4].copy())
        vs.append(y[4:] / y[4])
        taus.append(tau)
        norms.append(_norm(g, y[4:]))
    norms = np.array(norms)
    return GeodesicPath(np.array(ts), np.array(xs), np.array(vs), np.array(taus), exited, "proper",
                        {"steps": len(ts) - 1, "dtau": h, "norm_drift": float(np.abs(norms + 1.0).max()),
                         "t_end": float(t_end)})


def proper_time(mf: MetricField, path: GeodesicPath, tol=1e-12):
    """``int dt sqrt(-g(xdot, xdot))`` along the samples by the trapezoid rule."""
    lat = mf.lattice
    vals = mf.g.reshape(lat.shape + (16,)).copy()
    vals[mf.empty] = np.nan
    pts = np.column_stack([path.t, path.x])
    g = kernels.interp_multilinear_batch(vals, lat.origin, lat.spacing, lat.periodic, pts).reshape(-1, 4, 4)
    s = -np.einsum("na,nab,nb->n", path.xdot, g, path.xdot)
    bad = np.flatnonzero(~np.isfinite(s))
    if bad.size:
        raise DomainError(f"sample {bad[0]} lies outside the supported region")
    neg = np.flatnonzero(s < -tol)
    if neg.size:
        k = int(neg[0])
        raise DomainError(f"path is spacelike at sample {k} (t = {path.t[k]:g}, -g(xdot, xdot) = {s[k]:.3g})")
    return float(trapezoid(np.sqrt(np.maximum(s, 0.0)), path.t))


def path_from_function(t, x_of_t, xdot_of_t):
    """Wrap an arbitrary worldline ``x^a(t)`` with velocity ``dx^a/dt`` as a :class:`GeodesicPath` for quadrature."""
    t = np.asarray(t, dtype=float)
    X = np.asarray(x_of_t(t), dtype=float).reshape(len(t), 3)
    V = np.asarray(xdot_of_t(t), dtype=float).reshape(len(t), 3)
    return GeodesicPath(t, X, np.column_stack([np.ones(len(t)), V]), np.zeros(len(t)), False, "given")


@dataclass
class ExtremalityCheck:
    tau_geodesic: float
    tau_perturbed: np.ndarray
    seed: int

    @property
    def max_excess(self) -> float:
        """Largest ``tau(perturbed) - tau(geodesic)``; negative when the geodesic wins every comparison."""
        return float(np.max(self.tau_perturbed - self.tau_geodesic))

    def to_dict(self):
        return {"tau_geodesic": self.tau_geodesic, "max_excess": self.max_excess,
                "n_paths": int(len(self.tau_perturbed)), "seed": self.seed}


def geodesic_extremality(mf: MetricField, path: GeodesicPath, n_paths=100, amplitude=0.05, modes=3, seed=0):
    """Compare proper time along ``path`` with endpoint-fixed sine perturbations of it.

    Path ``k`` adds ``sum_m c_m sin(pi m s)`` with ``s`` the normalised
    coordinate time and ``c`` uniform in ``[-amplitude, amplitude]`` drawn from
    substream ``(seed, "extremality", k)``.
    """
    t = path.t
    T = t[-1] - t[0]
    if not T > 0:
        raise ConfigurationError("path needs a positive coordinate-time span")
    s = (t - t[0]) / T
    m = np.arange(1, modes + 1)[:, None]
    basis = np.sin(np.pi * m * s[None, :]).T
    dbasis = (np.pi * m / T * np.cos(np.pi * m * s[None, :])).T
    tau0 = proper_time(mf, path)
    out = np.empty(n_paths)
    for k in range(n_paths):
        c = stream(seed, "extremality", k).uniform(-amplitude, amplitude, (modes, 3))
        pert = path_from_function(t, lambda _: path.x + basis @ c, lambda _: path.xdot[:, 1:] + dbasis @ c)
        try:
            out[k] = proper_time(mf, pert)
        except DomainError as exc:
            raise DomainError(f"perturbed path {k}: {exc}; lower the amplitude or lengthen the path") from None
    return ExtremalityCheck(tau0, out, int(seed))


# ---------------------------------------------------------------------------
# Interaction entropy
# ---------------------------------------------------------------------------


def _field_ginv_at(mf, ens):
    vals = np.ascontiguousarray(mf.g_inv.reshape(mf.shape + (16,)))
    lat = mf.lattice
    out = np.empty((ens.count, 4, 4))
    for i, x in enumerate(ens.positions):
        P = np.concatenate([[lat.origin[0]], x])
        out[i] = kernels.interp_multilinear(vals, np.array(lat.origin), np.array(lat.spacing),
                                            np.array(lat.periodic), P).reshape(4, 4)
    return out


def velocity_covariance(ens, mf: MetricField):
    """Target spatial second moments ``(g_i^ab + g^ab(x_i)) / 2`` for every neuron."""
    return 0.5 * (ens.g_inv + _field_ginv_at(mf, ens)[:, 1:, 1:])


def sample_velocities(ens, mf: MetricField, n_samples, seed):
    """Zero-mean Gaussian spatial velocities with the prescribed covariance, one substream per neuron."""
    cov = velocity_covariance(ens, mf)
    vel = np.empty((ens.count, n_samples, 3))
    for i in range(ens.count):
        L = np.linalg.cholesky(cov[i])
        vel[i] = stream(seed, "velocities", i).standard_normal((n_samples, 3)) @ L.T
    return ens.with_velocities(vel)


def velocity_moment_error(ens, mf: MetricField):
    """Max over neurons of ``max|sample second moment - target| / max|target|``."""
    if ens.velocities is None:
        raise ConfigurationError("ensemble carries no velocity samples")
    cov = velocity_covariance(ens, mf)
    V = ens.velocities
    S = np.einsum("nsa,nsb->nab", V, V) / V.shape[1]
    return float(np.max(np.abs(S - cov).max(axis=(1, 2)) / np.abs(cov).max(axis=(1, 2))))


@dataclass
class InteractionReport:
    field: np.ndarray
    delta_s_int: float
    bulk: float
    residual: float
    accelerations: np.ndarray


def interaction_entropy(ens, mf: MetricField, grid=None, chris=None):
    """Interaction entropy density ``-{g_i,ab a_i^a x^b sqrt(g_i)}`` on the spatial grid of ``mf``.

    Mean accelerations ``a_i`` follow from the coordinate-time geodesic
    equation applied to every velocity sample (with ``dx^0/dt = 1``).  ``bulk``
    is the per-neuron term ``sum_i g_i,ab a_i^a x_i^b``; the near-equilibrium
    balance says ``bulk + delta_s_int = 0`` and ``residual`` reports the sum.
    """
    from .spacetime import SpatialGrid, curly_bracket

    if ens.velocities is None:
        raise ConfigurationError("interaction entropy needs per-neuron velocity samples")
    if grid is None:
        if "grid" not in mf.meta:
            raise ConfigurationError("pass the spatial grid the metric field was built on")
        grid = SpatialGrid.from_dict(mf.meta["grid"])
    ip = _Interpolant(mf, chris)
    lat = mf.lattice
    acc = np.zeros((ens.count, 3))
    for i in range(ens.count):
        G, _ = ip(np.concatenate([[lat.origin[0]], ens.positions[i]]))
        if not np.all(np.isfinite(G)):
            raise DomainError(f"neuron {i} sits where the Christoffel symbols are undefined")
        V = ens.velocities[i]
        xd = np.column_stack([np.ones(V.shape[0]), V])
        quad = np.einsum("mab,sa,sb->sm", G, xd, xd)
        acc[i] = np.mean(quad[:, :1] * V - quad[:, 1:], axis=0)
    A = np.einsum("nab,na->nb", ens.g_spatial, acc) * ens.sqrt_det[:, None]
    pts = grid.points()
    curly = curly_bracket(ens, A, pts)
    dens = -np.einsum("mb,mb->m", curly, pts)
    delta = float(dens.sum() * grid.cell_volume)
    bulk = float(np.einsum("nb,nb->", A / ens.sqrt_det[:, None], ens.positions))
    return InteractionReport(dens.reshape(grid.resolution), delta, bulk, bulk + delta, acc)
