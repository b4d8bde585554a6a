"""Metric tensors sampled on a regular space-time lattice.

Axis order is ``(t, x, y, z)``.  Node ``j`` of axis ``k`` sits at
``origin[k] + j * spacing[k]``; a periodic axis has period ``n * spacing``.
An axis with a single node is static: every derivative along it vanishes.
Quadratures are ``sum * cell_volume``, exact for trigonometric data on
periodic axes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

SYM_PAIRS = tuple((a, b) for a in range(4) for b in range(a, 4))


@dataclass(frozen=True)
class Lattice:
    origin: tuple
    spacing: tuple
    shape: tuple
    periodic: tuple = (False, False, False, False)

    def __post_init__(self):
        o = tuple(float(v) for v in np.reshape(self.origin, 4))
        s = tuple(float(v) for v in np.reshape(self.spacing, 4))
        n = tuple(int(v) for v in np.reshape(self.shape, 4))
        p = tuple(bool(v) for v in np.reshape(self.periodic, 4))
        if any(not np.isfinite(v) or v <= 0 for v in s):
            raise ConfigurationError(f"lattice spacings must be positive, got {s}")
        if any(v < 1 for v in n):
            raise ConfigurationError(f"lattice shape must be positive, got {n}")
        for k in range(4):
            if p[k] and n[k] < 3:
                raise ConfigurationError(f"periodic axis {k} needs at least 3 nodes")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "spacing", s)
        object.__setattr__(self, "shape", n)
        object.__setattr__(self, "periodic", p)

    def axis(self, k):
        return self.origin[k] + np.arange(self.shape[k]) * self.spacing[k]

    def mesh(self):
        """Sparse ``ij`` coordinate arrays broadcasting to ``shape``."""
        return np.meshgrid(*(self.axis(k) for k in range(4)), indexing="ij", sparse=True)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def period(self):
        return tuple(n * h for n, h in zip(self.shape, self.spacing))

    def to_dict(self):
        return {"origin": list(self.origin), "spacing": list(self.spacing), "shape": list(self.shape),
                "periodic": list(self.periodic)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["origin"], d["spacing"], d["shape"], d.get("periodic", (False,) * 4))


def _check_gauge(g):
    """Synchronous gauge, bit-exact: ``g00 = -1`` and ``g0a = ga0 = 0``."""
    return bool(np.all(g[..., 0, 0] == -1.0) and np.all(g[..., 0, 1:] == 0.0) and np.all(g[..., 1:, 0] == 0.0))


@dataclass
class MetricField:
    """``g_{mu nu}``, ``g^{mu nu}`` and ``sqrt(-g)`` at every lattice node.

    ``g_inv`` and ``sqrt_minus_g`` default to the node-wise inverse and
    determinant.  Ensemble-built fields supply their own weighted averages,
    which agree with those only to second order in the deviation from
    flatness.  ``empty`` marks nodes without neuron support; they are excluded
    from all tensor calculus.
    """

    lattice: Lattice
    g: np.ndarray
    g_inv: np.ndarray | None = None
    sqrt_minus_g: np.ndarray | None = None
    empty: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    synchronous: bool = True

    def __post_init__(self):
        shape = self.lattice.shape
        g = np.asarray(self.g, dtype=float)
        if g.shape != shape + (4, 4):
            raise ConfigurationError(f"metric array shape {g.shape} does not match lattice {shape}")
        self.g = g
        if self.empty is None:
            self.empty = np.zeros(shape, dtype=bool)
        self.empty = np.asarray(self.empty, dtype=bool).reshape(shape)
        full = ~self.empty
        if not np.all(np.isfinite(g[full])):
            raise ConfigurationError("metric contains non-finite values at non-empty nodes")
        if np.abs(g - np.swapaxes(g, -1, -2)).max(initial=0.0) > 0:
            raise ConfigurationError("metric must be exactly symmetric")
        if self.synchronous and not _check_gauge(g):
            raise ConfigurationError("metric is not in synchronous gauge (g00 = -1, g0a = 0)")
        if self.g_inv is None:
            gi = np.zeros_like(g)
            gi[full] = np.linalg.inv(g[full])
            self.g_inv = 0.5 * (gi + np.swapaxes(gi, -1, -2))
        else:
            self.g_inv = np.asarray(self.g_inv, dtype=float).reshape(g.shape)
        if self.sqrt_minus_g is None:
            s = np.zeros(shape)
            det = np.linalg.det(g[full])
            if np.any(det >= 0):
                raise ConfigurationError("metric must have Lorentzian signature (det g < 0)")
            s[full] = np.sqrt(-det)
            self.sqrt_minus_g = s
        else:
            self.sqrt_minus_g = np.asarray(self.sqrt_minus_g, dtype=float).reshape(shape)
        if np.any(~(self.sqrt_minus_g[full] > 0)):
            raise ConfigurationError("sqrt(-g) must be positive at non-empty nodes")
        if self.synchronous and full.any():
            lam = np.linalg.eigvalsh(g[full][:, 1:, 1:])
            if lam[:, 0].min() <= 0:
                raise ConfigurationError("spatial block of the metric must be positive definite")

    @property
    def shape(self):
        return self.lattice.shape

    def integrate(self, values, mask=None):
        """``sum(values) * cell_volume`` over nodes selected by ``mask`` (default: non-empty)."""
        m = ~self.empty if mask is None else mask
        return float(np.sum(np.where(m, values, 0.0)) * self.lattice.cell_volume)

    def content_hash(self):
        h = hashlib.sha256()
        h.update(json.dumps(self.lattice.to_dict(), sort_keys=True).encode())
        for arr in (self.g, self.g_inv, self.sqrt_minus_g, self.empty):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def save(self, directory):
        """Write one CSV per independent component plus ``manifest.json``; returns written paths."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        files = []
        blocks = {}
        for a, b in SYM_PAIRS:
            blocks[f"g_{a}{b}"] = self.g[..., a, b]
            blocks[f"ginv_{a}{b}"] = self.g_inv[..., a, b]
        blocks["sqrt_minus_g"] = self.sqrt_minus_g
        blocks["empty"] = self.empty.astype(float)
        for name, arr in blocks.items():
            path = out / f"{name}.csv"
            np.savetxt(path, arr.reshape(-1), fmt="%.17g", header=name, comments="")
            files.append(path)
        manifest = {"lattice": self.lattice.to_dict(), "synchronous_gauge": _check_gauge(self.g),
                    "components": sorted(blocks), "hash": self.content_hash(), "meta": self.meta,
                    "layout": "C-order over (t, x, y, z), one value per line after the header"}
        mpath = out / "manifest.json"
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        files.append(mpath)
        return files

    @classmethod
    def load(cls, directory):
        src = Path(directory)
        manifest = json.loads((src / "manifest.json").read_text())
        lat = Lattice.from_dict(manifest["lattice"])
        shape = lat.shape

        def read(name):
            return np.loadtxt(src / f"{name}.csv", skiprows=1).reshape(shape)

        g = np.zeros(shape + (4, 4))
        gi = np.zeros(shape + (4, 4))
        for a, b in SYM_PAIRS:
            g[..., a, b] = g[..., b, a] = read(f"g_{a}{b}")
            gi[..., a, b] = gi[..., b, a] = read(f"ginv_{a}{b}")
        return cls(lat, g, gi, read("sqrt_minus_g"), read("empty") > 0.5, manifest.get("meta", {}),
                   synchronous=bool(manifest["synchronous_gauge"]))


def from_spatial(lattice: Lattice, spatial):
    """Synchronous-gauge metric from a spatial block of shape ``lattice.shape + (3, 3)``."""
    g = np.zeros(lattice.shape + (4, 4))
    g[..., 0, 0] = -1.0
    g[..., 1:, 1:] = np.broadcast_to(spatial, lattice.shape + (3, 3))
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    return g
