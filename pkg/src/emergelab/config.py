"""Experiment configuration: JSON ingestion, schema validation and defaults.

A config names an experiment ``kind`` and carries parameter, tolerance and
assertion blocks.  Missing entries are filled from :data:`DEFAULTS` on load,
so the parsed object is complete and serialises back to a config that parses
to the same object.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigurationError

KINDS = ("langevin", "fp", "schrodinger", "madelung", "compare-quantum", "build-metric",
         "geodesic", "action", "einstein-check", "tune")

_HARMONIC_FORCE = {"type": "harmonic", "k": 1.0, "center": 0.0}
_HARMONIC_POT = {"type": "harmonic", "omega": 1.0, "mass": 1.0, "center": 0.0, "value": 0.0}
_PACKET = {"center": 1.0, "sigma": math.sqrt(0.5), "momentum": 0.0}
_METRIC = {
    "type": "flat",
    "lattice": {"n": 16, "length": 2 * math.pi, "origin": 0.0, "periodic": True, "nt": 1, "t0": 0.0, "dt": 1.0},
    "eps": 0.05,
    "phi": {"type": "linear", "gradient": [0.02, 0.0, 0.0], "amplitude": 0.05, "phase": 0.5},
    "frw_power": 1.0,
    "ensemble": {"source": "perturbed", "n": 16, "spread": 1.0, "eig_range": [0.5, 2.0], "eps": 0.05},
    "grid": {"n": 24, "margin": 6.0, "dt": 1.0},
}

# Every tolerance listed here is also the name of an assertion and of a RunRecord criterion.
DEFAULTS = {
    "langevin": {
        "params": {"gamma": 1.0, "D": 0.25, "dt": 0.01, "n_steps": 600, "replicas": 100_000,
                   "force": _HARMONIC_FORCE, "init": {"loc": 0.0, "scale": 1.0},
                   "grid": {"lo": -4.0, "hi": 4.0, "n": 512, "boundary": "reflecting"},
                   "bandwidth": None, "reference": "fp", "relax_tol": 1e-9},
        "tolerances": {"stationary_l1": 0.05},
    },
    "fp": {
        "params": {"mode": "relax", "gamma": 1.0, "D": 0.25, "force": _HARMONIC_FORCE,
                   "init": {"loc": 0.0, "scale": 1.0},
                   "grid": {"lo": -4.0, "hi": 4.0, "n": 512, "boundary": "reflecting"},
                   "cfl": 0.25, "T": 1.0, "snapshots": 1000, "series_snapshots": 10, "relax_tol": 1e-9},
        "tolerances": {"stationary_l1": 1e-3, "entropy_identity": 1e-3, "mass_drift": 1e-10},
    },
    "schrodinger": {
        "params": {"grid": {"lo": -6.0, "hi": 6.0, "n": 256, "boundary": "reflecting"},
                   "potential": _HARMONIC_POT, "hbar": 1.0, "mass": 1.0, "init": _PACKET,
                   "T": 2 * math.pi, "dt": None, "snapshots": 8},
        "tolerances": {"norm_drift": 1e-10},
    },
    "madelung": {
        "params": {"grid": {"lo": -6.0, "hi": 6.0, "n": 256, "boundary": "reflecting"},
                   "potential": _HARMONIC_POT, "hbar": 1.0, "mass": 1.0, "init": _PACKET,
                   "T": 2 * math.pi, "dt": None, "snapshots": 8},
        "tolerances": {"mass_drift": 1e-6},
    },
    "compare-quantum": {
        "params": {"mode": "evolution", "grid": {"lo": -6.0, "hi": 6.0, "n": 256, "boundary": "reflecting"},
                   "resolutions": [256, 512], "potential": _HARMONIC_POT, "hbar": 1.0, "mass": 1.0,
                   "init": _PACKET, "T": 2 * math.pi, "dt_factor": 0.05,
                   "n_fields": 20, "density_range": [0.1, 2.0]},
        "tolerances": {"density_l1": 1e-2, "refinement_order": 1.0, "density_identity": 1e-15, "roundtrip": 1e-8},
    },
    "build-metric": {
        "params": {"mode": "field",
                   "ensemble": {"source": "random_spd", "n": 64, "spread": 1.0, "eig_range": [0.5, 2.0], "eps": 0.05},
                   "grid": {"n": 64, "margin": 6.0, "dt": 1.0}, "save_field": True, "velocity_samples": 0,
                   "eps_values": [0.1, 0.05, 0.025], "support": 1e-2, "n_boosts": 1000, "vmax": 0.9},
        "tolerances": {"neuron_count": 1e-4, "interaction_balance": 1e-6, "inverse_slope": 0.2,
                       "determinant_slope": 0.2, "lorentz_invariance": 1e-10, "classification": 0.0},
    },
    "geodesic": {
        "params": {"metric": _METRIC, "x0": [0.0, 0.0, 0.0, 0.0], "v0": [1.0, 0.3, 0.2, 0.0], "T": 2.0,
                   "dt": 0.01, "parameterization": "coordinate", "record_every": 1,
                   "n_paths": 100, "amplitude": 0.05, "modes": 3},
        "tolerances": {"extremality": 0.0, "straightness": 1e-8, "christoffel_oracle": 1e-12, "norm_drift": 1e-6},
    },
    "action": {
        "params": {"sector": "gravity", "metric": _METRIC, "resolutions": [], "lambda": 0.0, "n_bar": None,
                   "grid": {"lo": -3.0, "hi": 3.0, "n": 128, "boundary": "periodic"},
                   "potential": _HARMONIC_POT, "n_fields": 20, "n_t": 9, "T": 1.0,
                   "alpha": 0.6, "D": 0.9, "gamma": -0.4},
        "tolerances": {"christoffel_max": 1e-8, "ricci_max": 1e-8, "gamma_gamma_abs": 1e-8, "ricci_abs": 1e-8,
                       "form_difference": 0.05, "convergence_order": 0.3, "lambda_cancellation": 1e-9,
                       "form_identity": 1e-10},
    },
    "einstein-check": {
        "params": {"metric": _METRIC, "lambda": 0.0, "n_nodes": 3, "step": 1e-5},
        "tolerances": {"variation": 0.05, "lambda_exact": 0.0},
    },
    "tune": {
        "params": {"gamma": 1.0, "D": 1.0, "dt": 0.1, "target_hbar": 1.0, "policy": "gamma", "bounds": None,
                   "mu_sign": 1, "root_cases": [[1.0, 1.0, 2 * math.pi], [0.3, 2.0, 1.0], [5.0, 0.5, 40.0]],
                   "double_root": [0.5, 1.0]},
        "tolerances": {"alpha_quadratic": 1e-12, "saturation": 1e-9, "double_root": 0.0},
    },
}

# parameter keys holding paths that must exist, resolved against the config file directory
FILE_KEYS = ("ensemble_file", "field_dir")


def _schema():
    text = resources.files("emergelab").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        schema = _schema()
        jsonschema.Draft202012Validator.check_schema(schema)
        _VALIDATOR = jsonschema.Draft202012Validator(schema)
    return _VALIDATOR


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _validate(doc):
    errors = list(validator().iter_errors(doc))
    if errors:
        e = max(errors, key=lambda e: len(e.absolute_path))
        parts = list(e.absolute_path)
        if e.validator == "required" and isinstance(e.instance, dict):
            parts.append(next(r for r in e.validator_value if r not in e.instance))
        raise ConfigurationError(f"{_path(parts)}: {e.message}", path=_path(parts))


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _walk_files(block, parts):
    for k, v in block.items():
        if isinstance(v, dict):
            yield from _walk_files(v, parts + [k])
        elif k in FILE_KEYS and v is not None:
            yield parts + [k], v


def needs_seed(kind: str, params: dict, assertions: dict) -> bool:
    """True when the run draws random numbers."""
    if kind in ("langevin", "build-metric", "einstein-check"):
        return True
    if kind == "compare-quantum":
        return params["mode"] == "wavefunction"
    if kind == "action":
        return params["sector"] == "trainable" or params["metric"]["type"] == "ensemble"
    if kind == "geodesic":
        return assertions.get("extremality", True) or params["metric"]["type"] == "ensemble"
    return False


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict
    tolerances: dict
    assertions: dict
    seed: int | None = None
    name: str = ""
    output: str | None = None
    base_dir: Path = field(default=Path("."), compare=False)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name, "params": copy.deepcopy(self.params),
             "tolerances": dict(self.tolerances), "assertions": dict(self.assertions)}
        if self.seed is not None:
            d["seed"] = self.seed
        if self.output is not None:
            d["output"] = self.output
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self) -> str:
        """SHA-256 of the canonical config without its output location."""
        d = self.to_dict()
        d.pop("output", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def enabled(self, check: str) -> bool:
        return self.assertions.get(check, True)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object", path="$")
        _validate(raw)
        kind = raw["kind"]
        base = DEFAULTS[kind]
        params = _merge(base["params"], raw.get("params", {}))
        unknown = set(raw.get("tolerances", {})) - set(base["tolerances"])
        unknown |= set(raw.get("assertions", {})) - set(base["tolerances"])
        if unknown:
            key = sorted(unknown)[0]
            block = "tolerances" if key in raw.get("tolerances", {}) else "assertions"
            raise ConfigurationError(f"$.{block}.{key}: unknown check for kind {kind!r}; known: "
                                     + ", ".join(sorted(base["tolerances"])), path=f"$.{block}.{key}")
        tolerances = {**base["tolerances"], **raw.get("tolerances", {})}
        assertions = {k: True for k in base["tolerances"]}
        assertions.update(raw.get("assertions", {}))
        seed = raw.get("seed")
        if seed is None and needs_seed(kind, params, assertions):
            raise ConfigurationError(f"$.seed: required for stochastic experiment kind {kind!r}", path="$.seed")
        cfg = cls(kind, params, tolerances, assertions, seed, raw.get("name", ""), raw.get("output"), Path(base_dir))
        # defaults must satisfy the schema too, so the filled config is itself a valid document
        _validate(cfg.to_dict())
        for parts, value in _walk_files(params, ["params"]):
            if not cfg.resolve(value).exists():
                where = _path(parts)
                raise ConfigurationError(f"{where}: referenced file {value!r} does not exist", path=where)
        return cfg

    @classmethod
    def from_json(cls, text: str, base_dir=".") -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"$: invalid JSON ({exc})", path="$") from None
        return cls.from_dict(raw, base_dir)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {str(path)!r} does not exist", path="$")
    return ExperimentConfig.from_json(path.read_text(), path.parent)
