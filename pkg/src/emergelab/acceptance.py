"""The acceptance matrix: shipped configs, time budgets and the determinism re-run.

Each criterion is one or more configs under ``emergelab/acceptance``; it
passes when every run passes all of its checks inside the time budget.
Criterion 16 re-runs every seeded config of the other criteria in reference
mode and compares the RunRecord payloads, which include artifact hashes.
"""

from __future__ import annotations

import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .config import ExperimentConfig
from .runner import RunRecord, run

# number -> (title, config files, time budget in seconds)
CRITERIA = {
    1: ("FP stationarity", ["c01_fp_stationary.json"], 10),
    2: ("Langevin-FP agreement", ["c02_langevin_fp.json"], 30),
    3: ("entropy-production identity", ["c03_entropy_identity.json"], 10),
    4: ("action identity", ["c04_action_identity.json"], 5),
    5: ("Madelung-Schrodinger equivalence", ["c05_madelung_schrodinger.json"], 60),
    6: ("wavefunction map", ["c06_wavefunction.json"], 1),
    7: ("quantum-parameter algebra", ["c07_tune.json"], 1),
    8: ("Lorentz invariance", ["c08_lorentz.json"], 5),
    9: ("counting identity", ["c09_counting.json"], 60),
    10: ("perturbative consistency", ["c10_perturbative.json"], 120),
    11: ("flat-space zero suite", ["c11_flat_action.json", "c11_flat_geodesic.json"], 5),
    12: ("gamma-gamma vs Einstein-Hilbert", ["c12_gamma_gamma.json"], 120),
    13: ("geodesic extremality", ["c13_extremality.json", "c13_frw_christoffel.json"], 60),
    14: ("Einstein residual by variation", ["c14_variation.json", "c14_flat_lambda.json"], 120),
    15: ("Lambda cancellation", ["c15_lambda_cancellation.json"], 10),
}
DETERMINISM = 16


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    elapsed: float
    budget: float
    checks: list = field(default_factory=list)
    records: dict = field(default_factory=dict)
    note: str = ""

    @property
    def label(self):
        return f"{self.number}"

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        checks = "; ".join(self.checks)
        extra = f" [{self.note}]" if self.note else ""
        return (f"criterion {self.number:2d} {verdict}  {self.title}: {checks}  "
                f"({self.elapsed:.1f} s, budget {self.budget:g} s){extra}")


def config_path(name) -> Path:
    return Path(str(resources.files("emergelab").joinpath("acceptance", name)))


def load(name) -> ExperimentConfig:
    p = config_path(name)
    return ExperimentConfig.from_json(p.read_text(), p.parent)


def _describe(rec: RunRecord):
    out = []
    for c in rec.criteria:
        if c["relation"] == "within":
            out.append(f"{c['name']}={c['value']:.4g} (target {c['target']:g} +- {c['tolerance']:g})")
        elif c["relation"] == "true":
            out.append(f"{c['name']}={'yes' if c['value'] else 'no'}")
        else:
            out.append(f"{c['name']}={c['value']:.3g} {c['relation']} {c['tolerance']:g}")
    if rec.error:
        out.append(f"error: {rec.error}")
    return out


def run_criterion(number: int, out_root) -> CriterionResult:
    title, files, budget = CRITERIA[number]
    t0 = time.perf_counter()
    records, checks, ok = {}, [], True
    for name in files:
        rec = run(load(name), Path(out_root) / Path(name).stem)
        records[name] = rec.to_dict()
        checks += _describe(rec)
        ok &= rec.passed
    elapsed = time.perf_counter() - t0
    note = "" if elapsed <= budget else "over time budget"
    return CriterionResult(number, title, bool(ok and elapsed <= budget), elapsed, budget, checks, records, note)


def seeded_configs(numbers=None):
    """``(criterion, config file)`` for every config that draws random numbers."""
    out = []
    for n in sorted(CRITERIA if numbers is None else numbers):
        for name in CRITERIA[n][1]:
            if load(name).seed is not None:
                out.append((n, name))
    return out


def run_determinism(out_root, previous=None) -> CriterionResult:
    """Re-run each seeded config in reference mode and require identical record payloads."""
    previous = previous or {}
    t0 = time.perf_counter()
    checks, ok, slow, records = [], True, [], {}
    for n, name in seeded_configs():
        first = previous.get(name)
        if first is None:
            first = run(load(name), Path(out_root) / Path(name).stem).to_dict()
        s = time.perf_counter()
        again = run(load(name), Path(out_root) / "rerun" / Path(name).stem)
        took = time.perf_counter() - s
        a = RunRecord(**first).payload()
        same = a == again.payload()
        ok &= same
        budget = CRITERIA[n][2]
        if took > budget:
            slow.append(name)
        checks.append(f"{Path(name).stem}={'identical' if same else 'DIFFERS'}")
        records[name] = again.to_dict()
    elapsed = time.perf_counter() - t0
    note = f"re-run over budget: {', '.join(slow)}" if slow else ""
    return CriterionResult(DETERMINISM, "determinism", bool(ok and not slow), elapsed,
                           sum(CRITERIA[n][2] for n, _ in seeded_configs()), checks, records, note)


def _worker(args):
    number, out_root = args
    return run_criterion(number, out_root)


def run_suite(out_root="runs/acceptance", only=None, jobs=1, stream=None):
    numbers = sorted(set(only) if only else set(CRITERIA) | {DETERMINISM})
    plain = [n for n in numbers if n in CRITERIA]
    bad = [n for n in numbers if n not in CRITERIA and n != DETERMINISM]
    if bad:
        from .errors import ConfigurationError

        raise ConfigurationError(f"unknown criterion numbers {bad}; known 1-{DETERMINISM}", path="--only")
    results = []

    def emit(r):
        results.append(r)
        if stream is not None:
            print(r.line(), file=stream, flush=True)

    if jobs > 1 and len(plain) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r in pool.map(_worker, [(n, out_root) for n in plain]):
                emit(r)
    else:
        for n in plain:
            emit(run_criterion(n, out_root))
    if DETERMINISM in numbers:
        previous = {k: v for r in results for k, v in r.records.items()}
        emit(run_determinism(out_root, previous))
    summary = {r.number: {"passed": r.passed, "elapsed": r.elapsed, "checks": r.checks} for r in results}
    Path(out_root).mkdir(parents=True, exist_ok=True)
    (Path(out_root) / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return results


if __name__ == "__main__":
    res = run_suite(stream=sys.stdout)
    sys.exit(0 if all(r.passed for r in res) else 1)
