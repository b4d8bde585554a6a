import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emergelab.config import DEFAULTS, KINDS, ExperimentConfig, load_config, needs_seed
from emergelab.errors import ConfigurationError


def _minimal(kind):
    raw = {"kind": kind}
    d = DEFAULTS[kind]
    if needs_seed(kind, d["params"], {k: True for k in d["tolerances"]}):
        raw["seed"] = 1
    return raw


@pytest.mark.parametrize("kind", KINDS)
def test_defaults_are_schema_valid(kind):
    cfg = ExperimentConfig.from_dict(_minimal(kind))
    assert cfg.kind == kind
    assert set(cfg.tolerances) == set(cfg.assertions)


@pytest.mark.parametrize("kind", KINDS)
def test_roundtrip_identical(kind):
    cfg = ExperimentConfig.from_dict(_minimal(kind))
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.hash() == cfg.hash()


@settings(max_examples=60, deadline=None)
@given(gamma=st.floats(0.1, 5), D=st.floats(0.01, 2), n=st.integers(16, 600), seed=st.integers(0, 2**31),
       tol=st.floats(1e-12, 1.0), enabled=st.booleans())
def test_roundtrip_random_langevin(gamma, D, n, seed, tol, enabled):
    raw = {"kind": "langevin", "seed": seed, "params": {"gamma": gamma, "D": D, "grid": {"n": n}},
           "tolerances": {"stationary_l1": tol}, "assertions": {"stationary_l1": enabled}}
    cfg = ExperimentConfig.from_dict(raw)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert cfg.params["grid"]["lo"] == -4.0 and cfg.params["gamma"] == gamma


def test_hash_ignores_output_location():
    a = ExperimentConfig.from_dict({"kind": "tune", "output": "a"})
    b = ExperimentConfig.from_dict({"kind": "tune", "output": "b"})
    c = ExperimentConfig.from_dict({"kind": "tune", "params": {"target_hbar": 2.0}})
    assert a.hash() == b.hash() != c.hash()


@pytest.mark.parametrize("raw, path", [
    ({"kind": "fp", "params": {"grid": {"n": 4}}}, "$.params.grid.n"),
    ({"kind": "fp", "params": {"grid": {"nodes": 4}}}, "$.params.grid"),
    ({"kind": "nope"}, "$.kind"),
    ({"kind": "langevin"}, "$.seed"),
    ({"kind": "fp", "tolerances": {"stationary": 1.0}}, "$.tolerances.stationary"),
    ({"kind": "fp", "assertions": {"bogus": False}}, "$.assertions.bogus"),
    ({"kind": "tune", "params": {"policy": "beta"}}, "$.params.policy"),
    ({"kind": "geodesic", "seed": 1, "params": {"v0": [1, 0, 0]}}, "$.params.v0"),
    ({"kind": "action", "params": {"sector": "trainable"}}, "$.seed"),
    ({"kind": "compare-quantum", "params": {"mode": "wavefunction"}}, "$.seed"),
])
def test_schema_errors_report_field_path(raw, path):
    with pytest.raises(ConfigurationError) as err:
        ExperimentConfig.from_dict(raw)
    assert err.value.path == path
    assert str(err.value).startswith(path)


def test_seed_optional_for_deterministic_kinds():
    assert ExperimentConfig.from_dict({"kind": "fp"}).seed is None
    # a geodesic with extremality disabled draws nothing
    ExperimentConfig.from_dict({"kind": "geodesic", "assertions": {"extremality": False}})


def test_referenced_files_must_exist(tmp_path):
    raw = {"kind": "build-metric", "seed": 0,
           "params": {"ensemble": {"source": "file", "ensemble_file": "ens.json"}}}
    (tmp_path / "c.json").write_text(json.dumps(raw))
    with pytest.raises(ConfigurationError) as err:
        load_config(tmp_path / "c.json")
    assert err.value.path == "$.params.ensemble.ensemble_file"
    (tmp_path / "ens.json").write_text("[]")
    cfg = load_config(tmp_path / "c.json")
    assert cfg.resolve("ens.json") == tmp_path / "ens.json"


def test_invalid_json_and_missing_file(tmp_path):
    (tmp_path / "bad.json").write_text("{kind: fp")
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigurationError, match="does not exist"):
        load_config(tmp_path / "absent.json")
