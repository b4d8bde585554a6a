"""Run orchestration: artifact bookkeeping, criteria and the RunRecord."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import shutil
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import _accel
from .config import ExperimentConfig
from .errors import ConfigurationError

RECORD_NAME = "runrecord.json"
# fields that legitimately differ between otherwise identical runs
VOLATILE = ("started", "wall_time")


def code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        from . import __version__

        return __version__


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Criterion:
    name: str
    value: float
    tolerance: float
    relation: str
    passed: bool
    target: float | None = None

    def describe(self) -> str:
        if self.relation == "within":
            return f"{self.name}: |{self.value:.6g} - {self.target:g}| <= {self.tolerance:g}"
        if self.relation == "true":
            return f"{self.name}: {bool(self.value)}"
        return f"{self.name}: {self.value:.6g} {self.relation} {self.tolerance:g}"


class RunContext:
    """Writes artifacts under ``out_dir`` and collects criteria, results and series."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.files: list[str] = []
        self.series: dict[str, dict] = {}
        self.criteria: list[Criterion] = []
        self.results: dict = {}

    # -- artifacts -----------------------------------------------------------------

    def path(self, rel) -> Path:
        rel = Path(rel).as_posix()
        if rel in self.files:
            raise ConfigurationError(f"artifact {rel!r} written twice")
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(rel)
        return p

    def adopt(self, paths):
        """Register files that a library routine wrote inside the run directory."""
        for p in paths:
            rel = Path(p).resolve().relative_to(self.out.resolve()).as_posix()
            if rel in self.files:
                raise ConfigurationError(f"artifact {rel!r} written twice")
            self.files.append(rel)

    def write_json(self, rel, obj):
        self.path(rel).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def write_array(self, rel, arr):
        with open(self.path(rel), "wb") as f:
            np.save(f, np.asarray(arr), allow_pickle=False)

    def write_csv(self, rel, columns, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self.path(rel).write_text(buf.getvalue())

    def add_series(self, name, columns, rows):
        """Tidy table exposed to ``lab emit``: one observation per row."""
        rel = f"series/{name}.csv"
        rows = list(rows)
        self.write_csv(rel, columns, rows)
        self.series[name] = {"file": rel, "columns": list(columns), "rows": len(rows)}

    # -- criteria ------------------------------------------------------------------

    def check(self, name, value, relation="<=", target=None):
        """Record a criterion when it is enabled; returns whether it passed (None when disabled)."""
        if not self.cfg.enabled(name):
            return None
        tol = float(self.cfg.tolerances[name])
        v = float(value)
        if relation == "<=":
            ok = v <= tol
        elif relation == "<":
            ok = v < tol
        elif relation == ">=":
            ok = v >= tol
        elif relation == "within":
            ok = abs(v - target) <= tol
        elif relation == "true":
            ok = bool(value)
        else:
            raise ValueError(relation)
        ok = bool(ok) and (relation == "true" or math.isfinite(v))
        self.criteria.append(Criterion(name, v, tol, relation, ok, target))
        return ok


@dataclass
class RunRecord:
    kind: str
    name: str
    config_hash: str
    code_version: str
    backend: str
    mode: str
    seed: int | None
    config: dict
    criteria: list
    results: dict
    artifacts: list
    series: dict
    passed: bool
    started: str = ""
    wall_time: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def payload(self) -> dict:
        """Everything except timestamps; identical for bit-reproducible runs."""
        d = self.to_dict()
        for k in VOLATILE:
            d.pop(k, None)
        return d

    def failed(self):
        return [c["name"] for c in self.criteria if not c["passed"]]

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunRecord":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"run record {str(path)!r} does not exist", path="$")
        try:
            d = json.loads(path.read_text())
            return cls(**d)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigurationError(f"{path}: not a run record ({exc})", path="$") from None


def default_out_dir(cfg: ExperimentConfig) -> Path:
    if cfg.output:
        return cfg.resolve(cfg.output)
    return Path("runs") / f"{cfg.kind}-{cfg.hash()[:12]}"


def _prepare(out: Path):
    """Make ``out`` an empty run directory, clearing files owned by a previous record only."""
    if not out.exists():
        out.mkdir(parents=True)
        return
    rec = out / RECORD_NAME
    owned = set()
    if rec.exists():
        try:
            owned = {a["path"] for a in json.loads(rec.read_text()).get("artifacts", [])} | {RECORD_NAME}
        except (json.JSONDecodeError, AttributeError, KeyError, TypeError):
            owned = set()
    present = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()}
    foreign = sorted(present - owned)
    if foreign:
        raise ConfigurationError(f"output directory {str(out)!r} holds files not listed in a run record "
                                 f"(for example {foreign[0]!r}); choose an empty directory", path="$.output")
    for rel in present:
        (out / rel).unlink()
    for d in sorted((p for p in out.rglob("*") if p.is_dir()), key=lambda p: -len(p.parts)):
        if not any(d.iterdir()):
            d.rmdir()


def orphans(out: Path, record: dict) -> list:
    """Files under ``out`` that the record does not list."""
    listed = {a["path"] for a in record["artifacts"]} | {RECORD_NAME}
    present = {p.relative_to(out).as_posix() for p in Path(out).rglob("*") if p.is_file()}
    return sorted(present - listed)


def run(cfg: ExperimentConfig, out_dir=None, threads=None) -> RunRecord:
    """Execute ``cfg`` and write artifacts plus ``runrecord.json`` into ``out_dir``.

    ``threads=None`` is the single-threaded bit-exact reference mode.
    """
    from .experiments import EXPERIMENTS

    out = Path(out_dir) if out_dir is not None else default_out_dir(cfg)
    _prepare(out)
    _accel.set_threads(1 if threads is None else threads)
    mode = "reference" if threads is None else f"threads={int(threads)}"
    ctx = RunContext(cfg, out)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    error = None
    try:
        EXPERIMENTS[cfg.kind](cfg, ctx)
    except ConfigurationError:
        shutil.rmtree(out, ignore_errors=True)
        raise
    except Exception as exc:  # numeric failures are recorded, not swallowed silently
        error = f"{type(exc).__name__}: {exc}"
        ctx.criteria.append(Criterion("completed", 0.0, 0.0, "true", False))
    wall = time.perf_counter() - t0
    artifacts = [{"path": rel, "sha256": _sha256(out / rel), "bytes": (out / rel).stat().st_size}
                 for rel in ctx.files]
    passed = error is None and all(c.passed for c in ctx.criteria)
    rec = RunRecord(cfg.kind, cfg.name, cfg.hash(), code_version(), _accel.backend(), mode, cfg.seed,
                    cfg.to_dict(), [asdict(c) for c in ctx.criteria], _jsonable(ctx.results), artifacts,
                    ctx.series, passed, started, wall, error)
    rec.save(out / RECORD_NAME)
    left = orphans(out, rec.to_dict())
    if left:
        raise RuntimeError(f"orphan files in {out}: {left}")
    return rec


def read_series(record_path, name):
    """Header and rows of series ``name`` from the run whose record is at ``record_path``."""
    record_path = Path(record_path)
    rec = RunRecord.load(record_path)
    if name not in rec.series:
        avail = ", ".join(sorted(rec.series)) or "(none)"
        raise ConfigurationError(f"unknown series {name!r}; available: {avail}", path="--series")
    f = record_path.parent / rec.series[name]["file"]
    if not f.exists():
        raise ConfigurationError(f"series file {str(f)!r} is missing", path="--series")
    return f.read_text()
