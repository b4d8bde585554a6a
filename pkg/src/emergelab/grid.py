"""Uniform cell-centred grids over trainable-variable space and the fields living on them.

Nodes sit at cell centres, ``q_j = min + (j + 1/2) dq``, so every integral is
``sum(values) * cell_volume``.  On a periodic axis this is the trapezoid rule;
on a reflecting axis it is the midpoint rule, which matches the zero-flux
finite-volume discretisation used by the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError

MIN_RESOLUTION = 16


@dataclass(frozen=True)
class GridSpec:
    dim: int
    extents: tuple
    resolution: tuple
    boundary: str = "reflecting"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError("only 1-D and 2-D grids are supported")
        ext = tuple((float(a), float(b)) for a, b in np.reshape(np.asarray(self.extents, dtype=float), (self.dim, 2)))
        res = tuple(int(r) for r in np.reshape(np.asarray(self.resolution), (self.dim,)))
        if any(not np.isfinite(a) or not np.isfinite(b) or b <= a for a, b in ext):
            raise ConfigurationError(f"invalid extents {ext}")
        if any(r < MIN_RESOLUTION for r in res):
            raise ConfigurationError(f"resolution must be at least {MIN_RESOLUTION} per axis, got {res}")
        if self.boundary not in ("periodic", "reflecting"):
            raise ConfigurationError("boundary must be 'periodic' or 'reflecting'")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def line(cls, lo, hi, n, boundary="reflecting"):
        return cls(1, ((lo, hi),), (n,), boundary)

    @property
    def shape(self):
        return self.resolution

    @property
    def spacing(self):
        return tuple((b - a) / n for (a, b), n in zip(self.extents, self.resolution))

    @property
    def dx(self):
        return self.spacing[0]

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis(self, k=0):
        (a, b), n = self.extents[k], self.resolution[k]
        return a + (np.arange(n) + 0.5) * (b - a) / n

    @property
    def nodes(self):
        """Node coordinates: shape (n,) in 1-D, a tuple of ``ij`` meshes in 2-D."""
        if self.dim == 1:
            return self.axis(0)
        return tuple(np.meshgrid(*(self.axis(k) for k in range(self.dim)), indexing="ij"))

    def integrate(self, values):
        return float(np.sum(values) * self.cell_volume)

    def evaluate(self, fn: Callable):
        nodes = self.nodes
        return np.asarray(fn(nodes) if self.dim == 1 else fn(*nodes), dtype=float) * np.ones(self.shape)

    def to_dict(self):
        return {"dim": self.dim, "extents": [list(e) for e in self.extents], "resolution": list(self.resolution),
                "boundary": self.boundary}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(int(d["dim"]), d["extents"], d["resolution"], d.get("boundary", "reflecting"))
        except KeyError as exc:
            raise ConfigurationError(f"grid spec is missing {exc.args[0]!r}") from None


def _check_grid_values(grid, values, dtype=float):
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != grid.shape:
        raise ConfigurationError(f"field shape {arr.shape} does not match grid {grid.shape}")
    return arr


@dataclass(frozen=True)
class DensityField:
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0
    mass_deficit: float = 0.0

    def __post_init__(self):
        v = _check_grid_values(self.grid, self.values)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("density has non-finite values")
        if np.any(v < 0):
            raise ConfigurationError("density has negative values")
        object.__setattr__(self, "values", v)

    @property
    def mass(self):
        return self.grid.integrate(self.values)

    def normalized(self):
        return DensityField(self.grid, self.values / self.mass, self.time, self.mass_deficit)

    def moment(self, k, axis=0):
        q = self.grid.axis(axis) if self.grid.dim == 1 else self.grid.nodes[axis]
        return self.grid.integrate(self.values * q**k)

    @classmethod
    def from_function(cls, grid, fn, time=0.0, normalize=True):
        d = cls(grid, grid.evaluate(fn), time)
        return d.normalized() if normalize else d


@dataclass(frozen=True)
class VelocityField:
    """Velocity per node; shape ``grid.shape`` in 1-D and ``(dim, *grid.shape)`` in 2-D."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = self.grid.shape if self.grid.dim == 1 else (self.grid.dim, *self.grid.shape)
        if v.shape != expected:
            raise ConfigurationError(f"velocity shape {v.shape} does not match {expected}")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("velocity has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape if grid.dim == 1 else (grid.dim, *grid.shape)))


@dataclass(frozen=True)
class WaveField:
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", _check_grid_values(self.grid, self.values, complex))

    @property
    def norm(self):
        return self.grid.integrate(np.abs(self.values) ** 2)

    @property
    def density(self):
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class PotentialSpec:
    """Potential over trainable space.

    ``V`` is either an array on a grid or a callable of node coordinates.
    When built by :meth:`from_parts` the constraint constant and the
    time-averaged free-energy rate are kept so that ``V = f_const + timeavg_dF``.
    """

    V: object
    f_const: float = 0.0
    timeavg_dF: object = None

    def values(self, grid: GridSpec):
        if callable(self.V):
            return grid.evaluate(self.V)
        return np.broadcast_to(np.asarray(self.V, dtype=float), grid.shape).astype(float)

    @classmethod
    def constant(cls, c):
        return cls(V=float(c), f_const=float(c), timeavg_dF=0.0)

    @classmethod
    def harmonic(cls, mass=1.0, omega=1.0, center=0.0):
        return cls(V=lambda *q: 0.5 * mass * omega**2 * sum((qi - center) ** 2 for qi in q))

    @classmethod
    def from_parts(cls, f_const, timeavg_dF):
        dF = np.asarray(timeavg_dF, dtype=float)
        return cls(V=f_const + dF, f_const=float(f_const), timeavg_dF=dF)
