"""Continuum fields from neuron ensembles through Gaussian-weighted curly brackets.

``{X}(x) = sum_i X_i (2 pi)^-3/2 exp(-(x - x_i)^T g_i (x - x_i) / 2)``.  With
``X_i = sqrt(det g_i)`` every neuron integrates to exactly one, so ``{sqrt g_i}``
is the neuron number density.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigurationError, DomainError
from .geometry import (EPS_MIN, LocalFrame, NeuronTrajectory, displacements, estimate_sigma_plus, fit_local_metric,
                       x0_clock)
from .metric import Lattice, MetricField, from_spatial

EMPTY_THRESHOLD = 1e-60
MIN_MARGIN_SIGMA = 5.0


@dataclass
class NeuronEnsemble:
    positions: np.ndarray
    g_spatial: np.ndarray
    velocities: np.ndarray | None = None
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        g = np.asarray(self.g_spatial, dtype=float).reshape(-1, 3, 3)
        if g.shape[0] != self.positions.shape[0]:
            raise ConfigurationError("need one metric per neuron")
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(g)):
            raise ConfigurationError("ensemble data must be finite")
        if np.abs(g - g.transpose(0, 2, 1)).max(initial=0.0) > 1e-12 * max(1.0, np.abs(g).max(initial=0.0)):
            raise ConfigurationError("neuron metrics must be symmetric")
        g = 0.5 * (g + g.transpose(0, 2, 1))
        if g.shape[0]:
            lam = np.linalg.eigvalsh(g)[:, 0]
            if lam.min() < EPS_MIN:
                bad = int(np.argmin(lam))
                raise ConfigurationError(f"neuron {bad} metric is not positive definite (min eigenvalue {lam[bad]:g})")
        self.g_spatial = g
        if self.velocities is not None:
            v = np.asarray(self.velocities, dtype=float)
            if v.ndim == 2:
                v = v[:, None, :]
            if v.shape[0] != self.count or v.shape[2] != 3:
                raise ConfigurationError(f"velocities must have shape (N, samples, 3), got {v.shape}")
            self.velocities = v

    @property
    def count(self):
        return self.positions.shape[0]

    @property
    def sqrt_det(self):
        return np.sqrt(np.linalg.det(self.g_spatial)) if self.count else np.zeros(0)

    @property
    def g_inv(self):
        return np.linalg.inv(self.g_spatial) if self.count else np.zeros((0, 3, 3))

    @property
    def widest_sigma(self):
        """Largest Gaussian standard deviation, ``1 / sqrt(min eigenvalue)``, over all neurons."""
        if not self.count:
            return 0.0
        return float(1.0 / np.sqrt(np.linalg.eigvalsh(self.g_spatial)[:, 0].min()))

    @classmethod
    def from_frames(cls, frames, time=0.0):
        frames = list(frames)
        pos = np.array([f.position for f in frames]).reshape(-1, 3)
        g = np.array([f.g_spatial for f in frames]).reshape(-1, 3, 3)
        return cls(pos, g, time=time)

    def frames(self):
        return [LocalFrame(p, g) for p, g in zip(self.positions, self.g_spatial)]

    def with_velocities(self, velocities):
        return NeuronEnsemble(self.positions, self.g_spatial, velocities, self.time)

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.positions).tobytes())
        h.update(np.ascontiguousarray(self.g_spatial).tobytes())
        return h.hexdigest()

    def to_json(self, path):
        items = [{"position": p.tolist(), "g_spatial": g.tolist()} for p, g in zip(self.positions, self.g_spatial)]
        Path(path).write_text(json.dumps(items, indent=1))
        return Path(path)

    @classmethod
    def from_json(cls, path, period=3):
        """Read ``[{"position": [...], "g_spatial": [[...]]}, ...]``.

        A neuron may give ``"trajectory_file"`` (CSV with a ``x`` column and a
        ``sigma_minus`` column, one entry per displacement window) instead of
        ``g_spatial``; its metric is then fitted from the displacements.
        """
        path = Path(path)
        try:
            items = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(items, list):
            raise ConfigurationError(f"{path}: expected a list of neurons")
        frames = []
        for k, item in enumerate(items):
            if "position" not in item:
                raise ConfigurationError(f"{path}: neuron {k} has no position")
            G = item.get("g_spatial")
            x0 = None
            if "trajectory_file" in item:
                tfile = (path.parent / item["trajectory_file"]).resolve()
                if not tfile.exists():
                    raise ConfigurationError(f"{path}: neuron {k} trajectory file {tfile} does not exist")
                G_fit, x0 = _metric_from_trajectory(tfile, period)
                G = G if G is not None else G_fit
            if G is None:
                raise ConfigurationError(f"{path}: neuron {k} needs g_spatial or a trajectory_file")
            frames.append(LocalFrame(item["position"], G, x0))
        return cls.from_frames(frames)


def _metric_from_trajectory(path, period):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "x" not in rows[0]:
        raise ConfigurationError(f"{path}: trajectory CSV needs an 'x' column")
    x = np.array([float(r["x"]) for r in rows])
    tr = NeuronTrajectory(x, period)
    x0 = x0_clock(estimate_sigma_plus(x))
    if "sigma_minus" not in rows[0]:
        return None, x0
    d = displacements(tr)
    sm = np.array([float(r["sigma_minus"]) for r in rows if r["sigma_minus"] not in ("", None)])
    if sm.size < d.shape[0]:
        raise ConfigurationError(f"{path}: need {d.shape[0]} sigma_minus values, found {sm.size}")
    return fit_local_metric(d, sm[:d.shape[0]]), x0


@dataclass(frozen=True)
class SpatialGrid:
    """Cell-centred box over the three spatial axes at global time ``t``."""

    extents: tuple
    resolution: tuple
    t: float = 0.0

    def __post_init__(self):
        ext = tuple((float(a), float(b)) for a, b in np.reshape(np.asarray(self.extents, dtype=float), (3, 2)))
        res = np.reshape(np.asarray(self.resolution), -1)
        res = tuple(int(r) for r in (np.repeat(res, 3) if res.size == 1 else res))
        if len(res) != 3 or any(r < 2 for r in res):
            raise ConfigurationError(f"need a resolution of at least 2 on each of 3 axes, got {res}")
        if any(b <= a for a, b in ext):
            raise ConfigurationError(f"invalid extents {ext}")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def around(cls, ens: NeuronEnsemble, margin=6.0, n=64, t=None):
        """Box enclosing every neuron with ``margin`` widest standard deviations to spare."""
        if ens.count == 0:
            raise DomainError("cannot size a grid around an empty ensemble")
        s = margin * ens.widest_sigma
        lo = ens.positions.min(axis=0) - s
        hi = ens.positions.max(axis=0) + s
        return cls(tuple(zip(lo, hi)), (n, n, n), ens.time if t is None else t)

    @property
    def spacing(self):
        return tuple((b - a) / n for (a, b), n in zip(self.extents, self.resolution))

    def axis(self, k):
        (a, b), n = self.extents[k], self.resolution[k]
        return a + (np.arange(n) + 0.5) * (b - a) / n

    def points(self):
        """All node coordinates, shape ``(nx*ny*nz, 3)`` in C order."""
        return np.stack(np.meshgrid(*(self.axis(k) for k in range(3)), indexing="ij"), axis=-1).reshape(-1, 3)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def lattice(self, dt=1.0):
        sp = self.spacing
        return Lattice((self.t, self.extents[0][0] + sp[0] / 2, self.extents[1][0] + sp[1] / 2,
                        self.extents[2][0] + sp[2] / 2), (dt,) + sp, (1,) + self.resolution)

    def margin_sigma(self, ens: NeuronEnsemble):
        """Smallest distance from a neuron to a box face, in units of that neuron's axis standard deviation."""
        if ens.count == 0:
            return np.inf
        sd = np.sqrt(np.diagonal(ens.g_inv, axis1=1, axis2=2))
        lo = np.array([e[0] for e in self.extents])
        hi = np.array([e[1] for e in self.extents])
        dist = np.minimum(ens.positions - lo, hi - ens.positions)
        return float((dist / sd).min())

    def to_dict(self):
        return {"extents": [list(e) for e in self.extents], "resolution": list(self.resolution), "t": self.t}

    @classmethod
    def from_dict(cls, d):
        return cls(d["extents"], d["resolution"], d.get("t", 0.0))


def curly_bracket(ens: NeuronEnsemble, payload, x):
    """Gaussian-weighted neuron sum of ``payload`` (shape ``(N,)`` or ``(N, P)``) at ``x`` (``(3,)`` or ``(M, 3)``)."""
    pay = np.asarray(payload, dtype=float)
    scalar_payload = pay.ndim == 1
    pay = pay.reshape(ens.count, -1)
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    if ens.count == 0:
        out = np.zeros((pts.shape[0], pay.shape[1]))
    else:
        out = kernels.curly_accumulate(pts, ens.positions, ens.g_spatial, pay)
    if scalar_payload:
        out = out[:, 0]
    return out[0] if single else out


def _sym6(m):
    return np.stack([m[:, 0, 0], m[:, 1, 1], m[:, 2, 2], m[:, 0, 1], m[:, 0, 2], m[:, 1, 2]], axis=1)


def _unsym6(c):
    out = np.empty(c.shape[:-1] + (3, 3))
    for k, (a, b) in enumerate(((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))):
        out[..., a, b] = out[..., b, a] = c[..., k]
    return out


def _curly_fields(ens, grid, extra=None):
    """``{sqrt g_i}``, ``{g_i sqrt g_i}`` and ``{g_i^-1 sqrt g_i}`` at every grid node."""
    sd = ens.sqrt_det
    cols = [sd[:, None], _sym6(ens.g_spatial) * sd[:, None], _sym6(ens.g_inv) * sd[:, None]]
    if extra is not None:
        cols.append(np.asarray(extra, dtype=float).reshape(ens.count, -1))
    return curly_bracket(ens, np.concatenate(cols, axis=1), grid.points())


def metric_field(ens: NeuronEnsemble, grid: SpatialGrid, dt=1.0):
    """Weighted-average metric, inverse metric and neuron density on ``grid``.

    Nodes where ``{sqrt g_i}`` falls below ``EMPTY_THRESHOLD`` are flagged empty
    and carry the flat metric as a placeholder.
    """
    lat = grid.lattice(dt)
    npts = int(np.prod(grid.resolution))
    if ens.count == 0:
        out = np.zeros((npts, 13))
    else:
        out = _curly_fields(ens, grid)
    S = out[:, 0]
    empty = ~(S >= EMPTY_THRESHOLD)
    safe = np.where(empty, 1.0, S)
    G = _unsym6(out[:, 1:7] / safe[:, None])
    Gi = _unsym6(out[:, 7:13] / safe[:, None])
    G[empty] = np.eye(3)
    Gi[empty] = np.eye(3)
    shape = lat.shape
    g = from_spatial(lat, G.reshape(shape + (3, 3)))
    gi = from_spatial(lat, Gi.reshape(shape + (3, 3)))
    meta = {"ensemble_hash": ens.content_hash(), "neurons": ens.count, "grid": grid.to_dict(),
            "empty_nodes": int(empty.sum())}
    return MetricField(lat, g, gi, S.reshape(shape), empty.reshape(shape), meta)


def stack_time(fields, periodic_time=False):
    """Join equally spaced constant-time slices into one field with a time axis."""
    fields = list(fields)
    if len(fields) < 2:
        raise ConfigurationError("need at least two time slices")
    ts = np.array([f.lattice.origin[0] for f in fields])
    dts = np.diff(ts)
    if np.any(dts <= 0) or np.abs(dts - dts[0]).max() > 1e-12 * max(1.0, abs(dts[0])):
        raise ConfigurationError("time slices must be equally spaced and increasing")
    base = fields[0].lattice
    for f in fields:
        if f.lattice.shape[1:] != base.shape[1:] or f.lattice.spacing[1:] != base.spacing[1:] \
                or f.lattice.origin[1:] != base.origin[1:]:
            raise ConfigurationError("time slices must share the spatial lattice")
    lat = Lattice(base.origin, (float(dts[0]),) + base.spacing[1:], (len(fields),) + base.shape[1:],
                  (periodic_time,) + base.periodic[1:])
    cat = lambda name: np.concatenate([getattr(f, name) for f in fields], axis=0)
    return MetricField(lat, cat("g"), cat("g_inv"), cat("sqrt_minus_g"), cat("empty"),
                       {"slices": [f.meta for f in fields]})


def neuron_count(ens: NeuronEnsemble, grid: SpatialGrid, min_margin=MIN_MARGIN_SIGMA):
    """``int {sqrt g_i} d^3x`` by the midpoint rule on ``grid``."""
    if ens.count == 0:
        return 0.0
    m = grid.margin_sigma(ens)
    if m < min_margin:
        raise DomainError(f"grid margin is {m:.2f} standard deviations, below the required {min_margin}")
    dens = curly_bracket(ens, ens.sqrt_det, grid.points())
    return float(np.sum(dens) * grid.cell_volume)


def _support(mf, support):
    m = ~mf.empty
    if support > 0 and m.any():
        m &= mf.sqrt_minus_g >= support * mf.sqrt_minus_g[m].max()
    return m


def inverse_consistency(mf: MetricField, support=0.0):
    """Max-norm of ``g^{mu nu} g_{nu lambda} - delta`` over non-empty nodes.

    ``support > 0`` restricts the norm to nodes whose neuron density is at
    least that fraction of its peak.
    """
    m = _support(mf, support)
    if not m.any():
        return 0.0
    prod = np.einsum("nab,nbc->nac", mf.g_inv[m], mf.g[m])
    return float(np.abs(prod - np.eye(4)).max())


def determinant_consistency(mf: MetricField, ens: NeuronEnsemble, support=0.0):
    """Max over non-empty nodes of ``|sqrt det g_ab(x) - <sqrt g_i>| / <sqrt g_i>``.

    ``<sqrt g_i> = {g_i} / {sqrt g_i}`` is the density-weighted mean of the
    per-neuron volume factors, the quantity the perturbative expansion
    actually matches at first order.  ``support`` as in :func:`inverse_consistency`.
    """
    m = _support(mf, support)
    if not m.any() or ens.count == 0:
        return 0.0
    grid = SpatialGrid.from_dict(mf.meta["grid"]) if "grid" in mf.meta else None
    if grid is None:
        raise ConfigurationError("metric field was not built from an ensemble grid")
    sd = ens.sqrt_det
    out = curly_bracket(ens, np.column_stack([sd, sd * sd]), grid.points())
    S, D = out[:, 0], out[:, 1]
    flat = m.reshape(-1)
    mean_vol = D[flat] / S[flat]
    vol = np.sqrt(np.linalg.det(mf.g[..., 1:, 1:].reshape(-1, 3, 3)[flat]))
    return float(np.max(np.abs(vol - mean_vol) / mean_vol))


def perturbed_ensemble(rng, n, eps, spread=1.0):
    """``g_i = I + eps h_i`` with fixed symmetric ``h_i`` of unit scale and uniform positions."""
    pos = rng.uniform(-spread, spread, (n, 3))
    h = rng.standard_normal((n, 3, 3))
    h = 0.5 * (h + h.transpose(0, 2, 1))
    return pos, h, NeuronEnsemble(pos, np.eye(3) + eps * h)


def random_spd_ensemble(rng, n, spread=1.0, eig_range=(0.5, 2.0)):
    """Random rotations of random diagonal metrics with eigenvalues in ``eig_range``."""
    pos = rng.uniform(-spread, spread, (n, 3))
    q, _ = np.linalg.qr(rng.standard_normal((n, 3, 3)))
    lam = rng.uniform(*eig_range, (n, 3))
    g = np.einsum("nab,nb,ncb->nac", q, lam, q)
    return NeuronEnsemble(pos, 0.5 * (g + g.transpose(0, 2, 1)))
