import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emergelab.dynamics import (
    LearningParams,
    QuantumParams,
    ReplicaEnsemble,
    alpha_roots,
    empirical_density,
    entropy_production_rate,
    entropy_production_trainable,
    hbar_of,
    initial_ensemble,
    is_double_root,
    langevin_run,
    langevin_step,
    quadratic_residual,
    saturation,
    shannon_entropy,
    tune_parameters,
)
from emergelab.errors import ConfigurationError, DomainError, NumericalError, TuningError
from emergelab.grid import DensityField, GridSpec
from emergelab.solvers import compare_densities, fp_run, fp_stable_dt


def test_params_validation():
    with pytest.raises(ConfigurationError):
        LearningParams(1.0, 0.1, 0.0)
    with pytest.raises(ConfigurationError):
        LearningParams(1.0, -0.1, 0.1)
    assert LearningParams(-2.0, 0.0, 0.1).gamma == -2.0


def test_langevin_fixed_point():
    lp = LearningParams(1.0, 0.0, 0.1, 5)
    ens = ReplicaEnsemble(np.linspace(-1, 1, 5))
    out = langevin_step(ens, lambda X: np.zeros_like(X), lp)
    np.testing.assert_array_equal(out.positions, ens.positions)
    assert out.step == 1 and out.time == pytest.approx(0.1)


def test_langevin_gradient_flow_decay():
    dt = 1e-3
    lp = LearningParams(1.0, 0.0, dt, 1)
    ens = langevin_run(ReplicaEnsemble([[2.0]]), lambda X: X, lp, 1000)
    # Euler: (1 - dt)^n, within O(dt) of exp(-t)
    assert ens.positions[0, 0] == pytest.approx(2.0 * (1 - dt) ** 1000, rel=1e-12)
    assert ens.positions[0, 0] == pytest.approx(2.0 * math.exp(-1.0), rel=1e-3)


def test_langevin_free_energy_monotone_without_noise():
    lp = LearningParams(0.5, 0.0, 0.05, 3)
    ens = ReplicaEnsemble([[1.5], [-0.7], [3.0]])
    F = []
    langevin_run(ens, lambda X: X**3 - X, lp, 200, callback=lambda e: F.append(np.sum(e.positions**4 / 4 - e.positions**2 / 2)))
    assert np.all(np.diff(F) <= 1e-15)


def test_langevin_stationary_law():
    lp = LearningParams(1.0, 0.25, 0.01, 100_000, seed=3)
    ens = langevin_run(initial_ensemble(lp), lambda X: X, lp, 600)
    grid = GridSpec.line(-4, 4, 128)
    d = empirical_density(ens, grid)
    exact = DensityField.from_function(grid, lambda q: np.exp(-2 * q**2))
    assert compare_densities(d, exact) < 0.05


def test_langevin_non_finite_gradient():
    lp = LearningParams(1.0, 0.1, 0.01, 3)
    with pytest.raises(NumericalError) as exc:
        langevin_step(ReplicaEnsemble([[0.0], [1.0], [2.0]]), lambda X: np.where(X > 1.5, np.nan, X), lp)
    assert exc.value.diagnostics["replicas"] == [2]


def test_langevin_reproducible():
    lp = LearningParams(1.0, 0.3, 0.01, 50, seed=11)
    a = langevin_run(initial_ensemble(lp), lambda X: X, lp, 20)
    b = langevin_run(initial_ensemble(lp), lambda X: X, lp, 20)
    assert a.positions.tobytes() == b.positions.tobytes()


def test_empirical_density_spike():
    grid = GridSpec.line(0, 1, 20)
    node = grid.axis(0)[7]
    d = empirical_density(ReplicaEnsemble(np.full(100, node)), grid)
    assert d.mass == pytest.approx(1.0, abs=1e-12)
    assert np.count_nonzero(d.values > 1e-12) == 1


def test_empirical_density_gaussian():
    rng = np.random.default_rng(0)
    grid = GridSpec.line(-6, 6, 128)
    d = empirical_density(ReplicaEnsemble(rng.standard_normal(100_000)), grid)
    exact = DensityField.from_function(grid, lambda q: np.exp(-q**2 / 2))
    assert abs(d.mass - 1) < 1e-6
    assert compare_densities(d, exact) < 0.05
    smooth = empirical_density(ReplicaEnsemble(rng.standard_normal(100_000)), grid, bandwidth=0.1)
    assert compare_densities(smooth, exact) < compare_densities(d, exact)


def test_empirical_density_bimodal_moments():
    # +-1 sit on nodes of this grid, so the deposit is exact
    grid = GridSpec.line(-2.125, 2.125, 17)
    x = np.r_[np.full(500, -1.0), np.full(500, 1.0)]
    d = empirical_density(ReplicaEnsemble(x), grid)
    np.testing.assert_allclose(d.values, d.values[::-1], atol=1e-12)
    assert d.moment(1) == pytest.approx(x.mean(), abs=1e-12)
    assert d.moment(2) == pytest.approx(np.mean(x**2), abs=1e-12)


def test_empirical_density_deficit_and_2d():
    grid = GridSpec.line(-1, 1, 16)
    d = empirical_density(ReplicaEnsemble([0.0, 0.5, 3.0, -4.0]), grid)
    assert d.mass_deficit == 0.5
    assert d.mass == pytest.approx(1.0)
    g2 = GridSpec(2, [[-3, 3], [-3, 3]], [32, 32])
    rng = np.random.default_rng(1)
    d2 = empirical_density(ReplicaEnsemble(rng.standard_normal((20_000, 2))), g2)
    assert d2.mass == pytest.approx(1.0, abs=1e-12)
    wrap = empirical_density(ReplicaEnsemble([[2.9], [3.1]]), GridSpec.line(-3, 3, 16, "periodic"))
    assert wrap.mass_deficit == 0.0 and wrap.mass == pytest.approx(1.0)


def test_entropy_production_uniform_is_zero():
    grid = GridSpec.line(0, 1, 64, "periodic")
    p = DensityField(grid, np.ones(64))
    assert entropy_production_rate(p, 0.0, LearningParams(1.0, 0.5, 1e-3)) == 0.0


def test_entropy_production_static_gaussian_rate():
    s2 = 0.4
    grid = GridSpec.line(-6, 6, 512)
    p = DensityField.from_function(grid, lambda q: np.exp(-q**2 / (2 * s2)))
    D = 0.3
    assert entropy_production_rate(p, 0.0, LearningParams(1.0, D, 1e-3)) == pytest.approx(D / s2, rel=1e-3)


@pytest.mark.parametrize("boundary", ["periodic", "reflecting"])
def test_entropy_production_matches_direct_change(boundary):
    grid = GridSpec.line(-6, 6, 192, boundary)
    lp = LearningParams(0.0, 0.5, 1.0)
    lp = LearningParams(0.0, 0.5, fp_stable_dt(grid, 0.0, lp))
    p0 = DensityField.from_function(grid, lambda q: np.exp(-q**2 / 0.6))
    ser = fp_run(p0, 0.0, lp, 1.0, snapshots=1000)
    dS = entropy_production_trainable(ser, 0.0, lp)
    assert dS == pytest.approx(shannon_entropy(ser[-1]) - shannon_entropy(ser[0]), abs=1e-3)


def test_entropy_production_with_drift():
    grid = GridSpec.line(-4, 4, 128)
    lp = LearningParams(1.0, 0.25, 1.0)
    F = grid.nodes**2 / 2
    # the explicit scheme's entropy change differs from the rate integral at O(dt)
    lp = LearningParams(1.0, 0.25, 0.0625 * fp_stable_dt(grid, F, lp))
    p0 = DensityField.from_function(grid, lambda q: np.exp(-(q - 1) ** 2 / 0.5))
    ser = fp_run(p0, F, lp, 0.5, snapshots=2100)
    dS = entropy_production_trainable(ser, F, lp)
    assert dS == pytest.approx(shannon_entropy(ser[-1]) - shannon_entropy(ser[0]), abs=1e-3)


def test_entropy_floor_warns():
    grid = GridSpec.line(0, 1, 16)
    v = np.ones(16)
    v[3] = 0.0
    with pytest.warns(RuntimeWarning):
        entropy_production_rate(DensityField(grid, v), 0.0, LearningParams(1.0, 1.0, 1.0))


def test_alpha_roots_examples():
    a1, a2 = alpha_roots(1.0, 1.0, 2 * math.pi)
    assert a1 == pytest.approx(2 + math.sqrt(3), rel=1e-14)
    assert a2 == pytest.approx(2 - math.sqrt(3), rel=1e-14)
    assert alpha_roots(1.0, 1.0, 5 * math.pi) is None  # |gamma mu / D| > 4 pi
    # double root
    D, g = 0.5, 1.0
    mu = 2 * math.pi * (2 * D / g)
    r = alpha_roots(D, g, mu)
    assert is_double_root(D, g, mu)
    assert r[0] == pytest.approx((2 * D / g) / (mu / (2 * math.pi)) ** 2, rel=1e-12) == r[1]
    with pytest.raises(DomainError):
        alpha_roots(1.0, 1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 1.0))
def test_alpha_roots_quadratic_and_vieta(D, gamma, frac):
    mu = frac * 4 * math.pi * D / gamma
    a1, a2 = alpha_roots(D, gamma, mu)
    assert a1 > 0 and a2 > 0
    assert quadratic_residual(a1, D, gamma, mu) < 1e-12
    assert quadratic_residual(a2, D, gamma, mu) < 1e-12
    assert a1 * a2 == pytest.approx((2 * math.pi / mu) ** 2, rel=1e-12)


def test_hbar_of_examples():
    assert hbar_of(1.0, 0.25, 1.0) == 0.0
    assert hbar_of(1.0, 1.0, 1.0) == pytest.approx(math.sqrt(3), rel=1e-15)
    with pytest.raises(DomainError):
        hbar_of(1.0, 0.1, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.01, 1.0))
def test_hbar_roundtrip(D, gamma, frac):
    h0 = frac * 2 * D / gamma
    for a in alpha_roots(D, gamma, 2 * math.pi * h0):
        assert hbar_of(a, D, gamma) == pytest.approx(h0, rel=1e-10)


def test_quantum_params_from_learning():
    qp = QuantumParams.from_learning(LearningParams(0.5, 1.0, 0.1), alpha=1.0)
    assert qp.mass == 1.0
    assert qp.hbar == pytest.approx(math.sqrt(7))
    assert qp.mu == pytest.approx(2 * math.pi * qp.hbar)


def test_tune_examples():
    lp = LearningParams(1.0, 1.0, 0.1)
    assert tune_parameters(lp, 1.0, "gamma").gamma == pytest.approx(2.0, rel=1e-12)
    out = tune_parameters(lp, 1.0, "D")
    assert out.diffusion == pytest.approx(0.5, rel=1e-12) and out.gamma == 1.0
    sat = LearningParams(2.0, 1.0, 0.1)
    assert tune_parameters(sat, 1.0) is sat
    neg = tune_parameters(LearningParams(-1.0, 1.0, 0.1), 1.0)
    assert neg.gamma == pytest.approx(-2.0)
    with pytest.raises(TuningError):
        tune_parameters(lp, 1.0, "gamma", bounds=(3.0, 10.0))
    with pytest.raises(TuningError):
        tune_parameters(LearningParams(1.0, 0.0, 0.1), 1.0, "gamma")


def test_tune_random_draws():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        lp = LearningParams(rng.choice([-1, 1]) * rng.uniform(0.01, 10), rng.uniform(0.01, 10), 0.1)
        h = rng.uniform(0.01, 10)
        policy = "gamma" if rng.random() < 0.5 else "D"
        out = tune_parameters(lp, h, policy)
        mu = 2 * math.pi * h
        assert abs(saturation(out, mu) - 1) < 1e-9
        disc = (2 * out.diffusion / out.gamma) ** 2 - (mu / (2 * math.pi)) ** 2
        assert disc >= -1e-9 * (2 * out.diffusion / out.gamma) ** 2
        assert out.dt == lp.dt and out.seed == lp.seed
