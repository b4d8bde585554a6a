"""Microscopic network model: state update, losses and Monte Carlo free energy.

The trainable state ``q`` is the bias vector followed by the row-major weight
matrix, ``q = [b_1..b_n, w_11, w_12, ..., w_nn]``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, NumericalError
from .rng import stream

ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda y: y,
    "tanh": np.tanh,
    "relu": lambda y: np.maximum(y, 0.0),
}


@dataclass(frozen=True)
class Septuple:
    """Network definition.

    ``boundary_mask`` is the diagonal of the boundary projector.  ``loss``
    selects the boundary or bulk loss and ``burn_in`` is the number of update
    steps (with boundary neurons clamped) used to marginalize bulk neurons
    before the loss is evaluated.
    """

    n_neurons: int
    boundary_mask: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    boundary_source: dict = field(default_factory=lambda: {"kind": "gaussian_mixture"})
    beta: float = 1.0
    loss: str = "boundary"
    burn_in: int = 0

    def __post_init__(self):
        n = int(self.n_neurons)
        if n < 1:
            raise ConfigurationError("n_neurons must be positive")
        mask = np.asarray(self.boundary_mask, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float).reshape(-1)
        if mask.shape != (n,) or w.shape != (n, n) or b.shape != (n,):
            raise ConfigurationError(
                f"dimension mismatch: n={n}, mask {mask.shape}, weights {w.shape}, bias {b.shape}"
            )
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ConfigurationError("boundary_mask entries must be 0 or 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}; expected one of {sorted(ACTIVATIONS)}")
        if not self.beta > 0:
            raise ConfigurationError("beta must be positive")
        if self.loss not in ("boundary", "bulk"):
            raise ConfigurationError("loss must be 'boundary' or 'bulk'")
        object.__setattr__(self, "n_neurons", n)
        object.__setattr__(self, "boundary_mask", mask)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "burn_in", int(self.burn_in))

    @property
    def n_boundary(self) -> int:
        return int(self.boundary_mask.sum())

    @property
    def n_trainable(self) -> int:
        return self.n_neurons * (self.n_neurons + 1)

    def activate(self, y):
        return ACTIVATIONS[self.activation](y)

    def trainable(self) -> np.ndarray:
        return np.concatenate([self.bias, self.weights.ravel()])

    def with_trainable(self, q) -> "Septuple":
        q = np.asarray(q, dtype=float).reshape(-1)
        n = self.n_neurons
        if q.shape != (self.n_trainable,):
            raise ConfigurationError(f"trainable vector has length {q.size}, expected {self.n_trainable}")
        return replace(self, bias=q[:n].copy(), weights=q[n:].reshape(n, n).copy())

    def to_dict(self) -> dict:
        return {
            "n": self.n_neurons,
            "boundary_mask": [int(m) for m in self.boundary_mask],
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "activation": self.activation,
            "beta": self.beta,
            "boundary_source": self.boundary_source,
            "loss": self.loss,
            "burn_in": self.burn_in,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Septuple":
        try:
            return cls(
                n_neurons=d["n"],
                boundary_mask=d["boundary_mask"],
                weights=d["weights"],
                bias=d["bias"],
                activation=d.get("activation", "identity"),
                boundary_source=d.get("boundary_source", {"kind": "gaussian_mixture"}),
                beta=d.get("beta", 1.0),
                loss=d.get("loss", "boundary"),
                burn_in=d.get("burn_in", 0),
            )
        except KeyError as exc:
            raise ConfigurationError(f"septuple is missing field {exc.args[0]!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Septuple":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class NetworkState:
    x: np.ndarray
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))


def _check_state(s: Septuple, st: NetworkState):
    if st.x.shape != (s.n_neurons,):
        raise ConfigurationError(f"state has {st.x.size} components, network has {s.n_neurons} neurons")


def _update(s: Septuple, X):
    # X has shape (..., n); rows are states
    return s.activate(X @ s.weights.T + s.bias)


def step_network(s: Septuple, st: NetworkState) -> NetworkState:
    _check_state(s, st)
    return NetworkState(_update(s, st.x), st.t + 1)


def _residuals(s: Septuple, X):
    return X - _update(s, X)


def boundary_loss(s: Septuple, st: NetworkState) -> float:
    _check_state(s, st)
    r = _residuals(s, st.x)
    return 0.5 * float(r @ (s.boundary_mask * r))


def bulk_loss(s: Septuple, st: NetworkState, V_term=None) -> float:
    _check_state(s, st)
    r = _residuals(s, st.x)
    v = 0.0 if V_term is None else _eval_potential(V_term, st.x[None, :], s.trainable())[0]
    return 0.5 * float(r @ r) + 0.5 * float(v)


def _eval_potential(V_term, X, q):
    if callable(V_term):
        return np.broadcast_to(np.asarray(V_term(X, q), dtype=float), X.shape[:1])
    return np.full(X.shape[0], float(V_term))


def losses(s: Septuple, X, V_term=None) -> np.ndarray:
    """Vectorized loss over a batch of states ``X`` of shape (m, n)."""
    r = _residuals(s, X)
    if s.loss == "boundary":
        return 0.5 * np.einsum("ij,j,ij->i", r, s.boundary_mask, r)
    h = 0.5 * np.einsum("ij,ij->i", r, r)
    if V_term is not None:
        h = h + 0.5 * _eval_potential(V_term, X, s.trainable())
    return h


def _load_sample_file(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError:
        # header row
        data = np.array([[float(v) for v in row] for row in rows[1:]])
    return np.atleast_2d(data)


def sample_boundary(s: Septuple, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw boundary-neuron values from the septuple's boundary source.

    Returns an array of shape (n_samples, n_boundary).
    """
    src = s.boundary_source
    nb = s.n_boundary
    kind = src.get("kind", "gaussian_mixture")
    if kind == "gaussian_mixture":
        means = np.atleast_2d(np.asarray(src.get("means", [[0.0] * nb]), dtype=float))
        k = means.shape[0]
        # scalar, one isotropic std per component, or a full (k, nb) table
        stds = np.asarray(src.get("stds", 1.0), dtype=float)
        if stds.ndim == 1:
            stds = stds[:, None]
        stds = np.broadcast_to(stds, (k, nb))
        weights = np.asarray(src.get("weights", np.full(k, 1.0 / k)), dtype=float)
        if means.shape[1] != nb:
            raise ConfigurationError(f"mixture means have dimension {means.shape[1]}, expected {nb}")
        comp = rng.choice(k, size=n_samples, p=weights / weights.sum())
        z = rng.standard_normal((n_samples, nb))
        return means[comp] + stds[comp] * z
    if kind == "samples":
        data = np.asarray(src["samples"], dtype=float) if "samples" in src else _load_sample_file(src["file"])
        data = data.reshape(data.shape[0], -1)
        if data.shape[1] != nb:
            raise ConfigurationError(f"sample file has {data.shape[1]} columns, expected {nb}")
        return data[rng.integers(0, data.shape[0], size=n_samples)]
    raise ConfigurationError(f"unknown boundary source kind {kind!r}")


def sample_states(s: Septuple, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Full network states: boundary drawn from the source, bulk neurons relaxed by burn-in."""
    X = np.zeros((n_samples, s.n_neurons))
    idx = np.flatnonzero(s.boundary_mask)
    xb = sample_boundary(s, n_samples, rng)
    X[:, idx] = xb
    for _ in range(s.burn_in):
        X = _update(s, X)
        X[:, idx] = xb
    return X


def free_energy(s: Septuple, q=None, n_samples: int = 10_000, seed: int = 0, V_term=None):
    """Monte Carlo estimate of ``(1/beta) log E[exp(-beta H)]`` and its standard error.

    The logarithm is evaluated with log-sum-exp, so the estimate stays finite
    for large ``beta * H``.  The same ``seed`` always uses the same boundary
    samples, which is what makes central differences over ``q`` low-variance.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be at least 1")
    net = s if q is None else s.with_trainable(q)
    X = sample_states(net, n_samples, stream(seed, "free_energy"))
    a = -net.beta * losses(net, X, V_term)
    if not np.all(np.isfinite(a)):
        raise NumericalError("loss is not finite on some samples", {"n_bad": int(np.sum(~np.isfinite(a)))})
    lse = logsumexp(a)
    F = (lse - np.log(n_samples)) / net.beta
    if n_samples < 2:
        return float(F), float("nan")
    w = np.exp(a - a.max())
    se = np.std(w, ddof=1) / np.sqrt(n_samples) / (net.beta * w.mean())
    return float(F), float(se)


def free_energy_gradient(s: Septuple, q=None, h: float = 1e-3, n_samples: int = 10_000, seed: int = 0, V_term=None):
    """Central-difference gradient of the free energy over the trainable vector."""
    if not h > 0:
        raise ConfigurationError("h must be positive")
    q0 = s.trainable() if q is None else np.asarray(q, dtype=float).reshape(-1)
    g = np.empty_like(q0)
    for k in range(q0.size):
        e = np.zeros_like(q0)
        e[k] = h
        fp, _ = free_energy(s, q0 + e, n_samples, seed, V_term)
        fm, _ = free_energy(s, q0 - e, n_samples, seed, V_term)
        g[k] = (fp - fm) / (2 * h)
    if not np.all(np.isfinite(g)):
        raise NumericalError("free-energy gradient is not finite", {"components": np.flatnonzero(~np.isfinite(g)).tolist()})
    return g


def load_septuple(path) -> Septuple:
    return Septuple.from_json(Path(path).read_text())
