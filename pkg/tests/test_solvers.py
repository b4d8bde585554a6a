import math

import numpy as np
import pytest

from emergelab.dynamics import LearningParams, QuantumParams
from emergelab.errors import ConfigurationError, NodeError, StabilityError
from emergelab.grid import DensityField, GridSpec, PotentialSpec, VelocityField, WaveField
from emergelab.solvers import (
    action_functional,
    action_variation,
    compare_densities,
    fp_relax,
    fp_run,
    fp_stable_dt,
    fp_step,
    from_wavefunction,
    ftilde_from_velocity,
    gaussian_wave,
    harmonic_ground_state,
    madelung_evolve,
    madelung_step,
    schrodinger_evolve,
    schrodinger_step,
    to_wavefunction,
)


def gauss(grid, c=0.0, var=1.0):
    return DensityField.from_function(grid, lambda q: np.exp(-((q - c) ** 2) / (2 * var)))


# --- Fokker-Planck ---------------------------------------------------------


@pytest.mark.parametrize("boundary", ["periodic", "reflecting"])
def test_fp_uniform_is_stationary(boundary):
    g = GridSpec.line(0, 1, 32, boundary)
    p = DensityField(g, np.ones(32))
    out = fp_step(p, 3.0, LearningParams(1.0, 0.1, 1e-4), n_steps=20)
    np.testing.assert_allclose(out.values, 1.0, atol=1e-14)


def test_fp_heat_kernel_variance():
    g = GridSpec.line(-10, 10, 400, "periodic")
    D, s2 = 0.5, 1.0
    lp = LearningParams(0.0, D, 0.2 * g.dx**2 / D)
    p = gauss(g, var=s2)
    out = fp_step(p, 0.0, lp, n_steps=100)
    t = 100 * lp.dt
    var = out.moment(2) - out.moment(1) ** 2
    assert var == pytest.approx(s2 + 2 * D * t, rel=0.01)
    assert abs(out.mass - p.mass) < 1e-12


def test_fp_stationary_law():
    g = GridSpec.line(-4, 4, 512)
    F = lambda q: q**2 / 2  # noqa: E731
    lp = LearningParams(1.0, 0.25, 1.0)
    lp = LearningParams(1.0, 0.25, fp_stable_dt(g, F, lp))
    p = fp_relax(gauss(g), F, lp, tol=1e-9)
    exact = DensityField.from_function(g, lambda q: np.exp(-2 * q**2))
    assert compare_densities(p, exact) < 1e-3


def test_fp_mass_conserved_per_step():
    g = GridSpec.line(-3, 3, 128, "periodic")
    F = np.sin(2 * np.pi * g.nodes / 6)
    lp = LearningParams(0.7, 0.2, 1e-4)
    p = gauss(g, 0.5, 0.3)
    for _ in range(10):
        q = fp_step(p, F, lp)
        assert abs(q.mass - p.mass) < 1e-12
        p = q


def test_fp_stability_rejected():
    g = GridSpec.line(-1, 1, 64)
    lp = LearningParams(1.0, 1.0, 1.0)
    with pytest.raises(StabilityError) as exc:
        fp_step(gauss(g), 0.0, lp)
    assert exc.value.suggested_dt == pytest.approx(0.25 * g.dx**2)


def test_fp_2d_matches_product_of_1d():
    g1 = GridSpec.line(-4, 4, 32, "periodic")
    g2 = GridSpec(2, [[-4, 4], [-4, 4]], [32, 32], "periodic")
    lp = LearningParams(0.0, 0.3, 0.002)
    p1 = gauss(g1, var=0.5)
    p2 = DensityField(g2, np.outer(p1.values, p1.values))
    a = fp_step(p1, 0.0, lp, n_steps=5).values
    b = fp_step(p2, 0.0, lp, n_steps=5).values
    # splitting error is O(dt^2) per step for commuting 1-D operators
    np.testing.assert_allclose(b, np.outer(a, a), atol=1e-5)
    assert abs(fp_step(p2, 0.0, lp, n_steps=5).mass - 1) < 1e-12


def test_fp_snapshots():
    g = GridSpec.line(-2, 2, 32)
    snaps = fp_run(gauss(g), 0.0, LearningParams(0.0, 0.1, 0.01), 0.1, snapshots=5)
    assert len(snaps) == 6
    assert snaps[-1].time == pytest.approx(0.1)


# --- Madelung --------------------------------------------------------------


def test_madelung_static_uniform():
    g = GridSpec.line(0, 1, 32, "periodic")
    p = DensityField(g, np.ones(32))
    u = VelocityField.zeros(g)
    p2, u2 = madelung_step(p, u, PotentialSpec.constant(2.0), QuantumParams.simple(), n_steps=10)
    np.testing.assert_array_equal(p2.values, p.values)
    np.testing.assert_array_equal(u2.values, 0.0)


def test_madelung_ground_state_stationary():
    g = GridSpec.line(-5, 5, 128)
    p = DensityField.from_function(g, lambda q: np.exp(-(q**2)))
    pot = PotentialSpec.harmonic()
    qp = QuantumParams.simple()
    p2, u2 = madelung_step(p, VelocityField.zeros(g), pot, qp)
    assert np.abs(p2.values - p.values).max() < 1e-6
    assert np.abs(u2.values).max() < 1e-6


def test_madelung_free_packet_quarter_period():
    g = GridSpec.line(-8, 8, 256)
    s2 = 0.5
    w = gaussian_wave(g, 0.0, math.sqrt(s2))
    p, u, _ = from_wavefunction(w)
    T = math.pi / 2
    p2, _ = madelung_evolve(p, u, PotentialSpec.constant(0.0), QuantumParams.simple(), T)
    st2 = s2 * (1 + (T / (2 * s2)) ** 2)
    exact = DensityField.from_function(g, lambda q: np.exp(-(q**2) / (2 * st2)))
    assert compare_densities(p2, exact) < 1e-2
    assert abs(p2.mass - 1) < 1e-8


def test_madelung_mass_per_step():
    g = GridSpec.line(-6, 6, 256)
    w = gaussian_wave(g, 1.0, math.sqrt(0.5))
    p, u, _ = from_wavefunction(w)
    pot, qp = PotentialSpec.harmonic(), QuantumParams.simple()
    for _ in range(5):
        p2, u = madelung_step(p, u, pot, qp, n_steps=1)
        assert abs(p2.mass - p.mass) < 1e-8
        p = p2


def test_madelung_node_rejected():
    g = GridSpec.line(-1, 1, 32)
    v = np.ones(32)
    v[10] = 0.0
    with pytest.raises(NodeError):
        madelung_step(DensityField(g, v), VelocityField.zeros(g), PotentialSpec.constant(0), QuantumParams.simple())


def test_madelung_dt_rejected():
    g = GridSpec.line(-1, 1, 32, "periodic")
    with pytest.raises(StabilityError):
        madelung_step(DensityField(g, np.ones(32)), VelocityField.zeros(g), PotentialSpec.constant(0),
                      QuantumParams.simple(), dt=1.0)


def test_madelung_2d_matches_1d_on_product_state():
    g1 = GridSpec.line(-6, 6, 64, "periodic")
    g2 = GridSpec(2, [[-6, 6], [-6, 6]], [64, 64], "periodic")
    p1 = gauss(g1, var=0.8)
    p2 = DensityField(g2, np.outer(p1.values, p1.values))
    qp = QuantumParams.simple()
    dt = 0.1 * g1.dx**2
    a, _ = madelung_step(p1, VelocityField.zeros(g1), PotentialSpec.constant(0), qp, dt=dt, n_steps=20)
    b, _ = madelung_step(p2, VelocityField.zeros(g2), PotentialSpec.constant(0), qp, dt=dt, n_steps=20)
    np.testing.assert_allclose(b.values, np.outer(a.values, a.values), rtol=1e-9, atol=1e-14)


def test_madelung_agrees_with_schrodinger_harmonic_period():
    g = GridSpec.line(-6, 6, 256)
    w = gaussian_wave(g, 1.0, math.sqrt(0.5))
    pot = PotentialSpec.harmonic()
    p, u, _ = from_wavefunction(w)
    pm, _ = madelung_evolve(p, u, pot, QuantumParams.simple(), 2 * math.pi)
    ws = schrodinger_evolve(w, pot, 2 * math.pi, dt=0.05 * g.dx)
    assert compare_densities(pm, DensityField(g, ws.density)) < 1e-2


# --- Schrodinger -----------------------------------------------------------


def test_schrodinger_constant_potential_phase():
    g = GridSpec.line(-5, 5, 128, "periodic")
    c, dt, n = 0.8, 0.01, 50
    # a constant is an eigenstate of the periodic Laplacian
    w = WaveField(g, np.full(128, 1 / math.sqrt(10), complex))
    out = schrodinger_step(w, PotentialSpec.constant(c), dt, n)
    assert np.abs(out.density - w.density).max() < 1e-12
    np.testing.assert_allclose(out.values, w.values * np.exp(-1j * c * dt * n), atol=1e-12)
    packet = gaussian_wave(g, 0.0, 0.7, momentum=1.0)
    a = schrodinger_step(packet, PotentialSpec.constant(c), dt, n)
    b = schrodinger_step(packet, PotentialSpec.constant(0.0), dt, n)
    assert np.abs(a.density - b.density).max() < 1e-12


def test_schrodinger_free_dispersion():
    g = GridSpec.line(-20, 20, 1024, "periodic")
    s0, T = 0.7, 2.0
    w = gaussian_wave(g, 0.0, s0)
    out = schrodinger_evolve(w, PotentialSpec.constant(0.0), T, 0.005)
    d = DensityField(g, out.density)
    var = d.moment(2) - d.moment(1) ** 2
    assert var == pytest.approx(s0**2 * (1 + (T / (2 * s0**2)) ** 2), rel=0.01)


def test_schrodinger_unitary_per_step():
    g = GridSpec.line(-5, 5, 200)
    w = gaussian_wave(g, 1.0, 0.5, momentum=2.0)
    pot = PotentialSpec.harmonic()
    for _ in range(5):
        w2 = schrodinger_step(w, pot, 0.005)
        assert abs(w2.norm - w.norm) < 1e-10
        w = w2


def test_schrodinger_ground_state_stationary():
    g = GridSpec.line(-6, 6, 256)
    w = harmonic_ground_state(g)
    out = schrodinger_evolve(w, PotentialSpec.harmonic(), 2 * math.pi, 0.005)
    assert np.abs(out.density - w.density).max() < 1e-8


def test_schrodinger_phase_guard():
    g = GridSpec.line(-5, 5, 64)
    with pytest.raises(StabilityError):
        schrodinger_step(gaussian_wave(g), PotentialSpec.constant(100.0), 0.01)


def test_schrodinger_2d_separable():
    g1 = GridSpec.line(-5, 5, 48, "periodic")
    g2 = GridSpec(2, [[-5, 5], [-5, 5]], [48, 48], "periodic")
    w1 = gaussian_wave(g1, 0.5, 0.8)
    w2 = WaveField(g2, np.outer(w1.values, w1.values))
    a = schrodinger_step(w1, PotentialSpec.constant(0), 0.01, 10).values
    b = schrodinger_step(w2, PotentialSpec.constant(0), 0.01, 10).values
    np.testing.assert_allclose(b, np.outer(a, a), atol=1e-5)


# --- wave-function map -----------------------------------------------------


def test_to_wavefunction_unit_box():
    g = GridSpec.line(0, 1, 16)
    w = to_wavefunction(DensityField(g, np.ones(16)), 0.0, 1.0)
    np.testing.assert_array_equal(w.values, 1.0)


def test_to_wavefunction_density_identity():
    rng = np.random.default_rng(0)
    g = GridSpec.line(0, 1, 200)
    p = DensityField(g, rng.uniform(0, 1, 200))
    w = to_wavefunction(p, rng.normal(size=200) * 10, 0.3)
    assert np.abs(np.abs(w.values) ** 2 - p.values).max() < 1e-15
    # larger values: the same bound holds relative to p
    p = DensityField(g, rng.uniform(0, 50, 200))
    w = to_wavefunction(p, rng.normal(size=200) * 10, 0.3)
    assert np.all(np.abs(np.abs(w.values) ** 2 - p.values) <= 1e-15 * p.values)


def test_plane_wave_velocity():
    hbar, M = 0.7, 2.0
    g = GridSpec.line(0, 1, 64)
    q = g.nodes
    w = to_wavefunction(DensityField(g, np.ones(64)), hbar * q, hbar, M)
    _, u, _ = from_wavefunction(w)
    np.testing.assert_allclose(u.values, hbar / M, atol=1e-8)
    # steep phase that wraps many times
    w = to_wavefunction(DensityField(g, np.ones(64)), 40 * hbar * q, hbar, M)
    _, u, _ = from_wavefunction(w)
    np.testing.assert_allclose(u.values, 40 * hbar / M, atol=1e-8)


def test_real_wave_has_zero_velocity():
    g = GridSpec.line(-3, 3, 64)
    _, u, _ = from_wavefunction(gaussian_wave(g))
    np.testing.assert_array_equal(u.values, 0.0)


@pytest.mark.parametrize("dim", [1, 2])
def test_wavefunction_roundtrip(dim):
    rng = np.random.default_rng(dim)
    g = GridSpec.line(0, 1, 64) if dim == 1 else GridSpec(2, [[0, 1], [0, 1]], [32, 40])
    p = DensityField(g, rng.uniform(0.1, 2.0, g.shape))
    nodes = (g.nodes,) if dim == 1 else g.nodes
    Ft = 5 * np.sin(3 * nodes[0]) + 20 * nodes[-1]
    w = to_wavefunction(p, Ft, 0.5)
    p2, _, Ft2 = from_wavefunction(w)
    w2 = to_wavefunction(p2, Ft2, 0.5)
    ph = np.vdot(w2.values.ravel(), w.values.ravel())
    ph /= abs(ph)
    assert np.abs(w2.values * ph - w.values).max() < 1e-8


def test_from_wavefunction_node():
    g = GridSpec.line(0, 1, 16)
    v = np.ones(16, complex)
    v[4] = 0.0
    with pytest.raises(NodeError):
        from_wavefunction(WaveField(g, v))


def test_ftilde_from_velocity():
    g = GridSpec.line(0, 2, 64)
    Ft = ftilde_from_velocity(VelocityField(g, np.full(64, 0.5)), 2.0)
    np.testing.assert_allclose(np.diff(Ft), g.dx, atol=1e-15)


# --- action functional -----------------------------------------------------


def smooth_series(g, rng, n_t=9, T=1.0):
    q = g.nodes
    L = g.extents[0][1] - g.extents[0][0]
    a = rng.normal(size=(4, 3))
    ps, Fs = [], []
    for t in np.linspace(0, T, n_t):
        ell = sum(a[k, 0] * np.cos(2 * np.pi * (k + 1) * q / L + a[k, 2] * t) for k in range(4))
        p = np.exp(ell)
        ps.append(DensityField(g, p / g.integrate(p), t))
        Fs.append(sum(a[k, 1] * np.sin(2 * np.pi * (k + 1) * q / L - t) for k in range(4)))
    return ps, Fs


def test_action_uniform_reduces_to_potential():
    g = GridSpec.line(0, 1, 32, "periodic")
    ps = [DensityField(g, np.ones(32), t) for t in (0.0, 0.5, 1.0)]
    V = np.linspace(0, 1, 32)
    alpha = 0.8
    # Ft constant in space and time
    f2, f3 = action_functional(ps, [np.full(32, 2.0)] * 3, PotentialSpec(V), alpha, 0.3, 1.1)
    want = alpha * g.integrate(V) * 1.0
    assert f2 == pytest.approx(want, rel=1e-12)
    assert f3 == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("boundary", ["periodic", "reflecting"])
def test_action_forms_agree(boundary):
    rng = np.random.default_rng(4)
    g = GridSpec.line(-3, 3, 128, boundary)
    for _ in range(5):
        ps, Fs = smooth_series(g, rng)
        Ft = [F + np.log(p.values) / (2 * 0.6) for F, p in zip(Fs, ps)]
        f2, f3 = action_functional(ps, Ft, PotentialSpec.harmonic(), 0.6, 0.9, -0.4)
        assert abs(f2 - f3) < 1e-10 * abs(f3)


def test_action_2d():
    g = GridSpec(2, [[-2, 2], [-2, 2]], [24, 24], "periodic")
    x, y = g.nodes
    ps, Fs = [], []
    for t in (0.0, 0.3, 0.6):
        p = np.exp(np.cos(np.pi * x / 2 + t) + 0.5 * np.sin(np.pi * y / 2))
        ps.append(DensityField(g, p / g.integrate(p), t))
        Fs.append(np.sin(np.pi * (x + y) / 2) * (1 + t))
    f2, f3 = action_functional(ps, Fs, PotentialSpec(0.3), 1.2, 0.5, 0.7)
    assert abs(f2 - f3) < 1e-10 * abs(f3)


def test_action_stationary_on_madelung_trajectory():
    # hbar = M = 1 needs gamma = 1/2 and, with alpha = 1, D = 1/4
    alpha, gamma = 1.0, 0.5
    D = 0.25 * gamma * (alpha + 1 / alpha)
    qp = QuantumParams.simple()
    pot = PotentialSpec.harmonic()
    g = GridSpec.line(-6, 6, 256)
    q = g.nodes
    h = np.exp(-((q - 1) ** 2))

    def variations(ds, T=0.8):
        p, u, _ = from_wavefunction(gaussian_wave(g, 1.0, math.sqrt(0.3)))
        ps, Ft = [p], [ftilde_from_velocity(u, 1.0)]
        for _ in range(int(round(T / ds))):
            p, u = madelung_evolve(p, u, pot, qp, ds)
            ps.append(p)
            Ft.append(ftilde_from_velocity(u, 1.0))
        Ft = np.stack(Ft)
        P = np.stack([x.values for x in ps])
        bump = np.sin(np.pi * np.arange(len(ps)) / (len(ps) - 1))[:, None]
        dF = bump * h
        # mass-preserving density direction, so the undetermined constant in Ft drops out
        dp = bump * P * (h - (P * h).sum(1, keepdims=True) * g.dx)
        out = []
        for a, b in ((0 * dp, dF), (dp, 0 * dF)):
            sol = action_variation(ps, Ft, pot, alpha, D, gamma, a, b, eps=1e-4)
            off = action_variation(ps, 1.2 * Ft, pot, alpha, D, gamma, a, b, eps=1e-4)
            out.append((abs(sol), abs(off)))
        return out

    coarse, fine = variations(0.05), variations(0.025)
    for (s1, o1), (s2, o2) in zip(coarse, fine):
        assert s2 < 0.1 * o2
        # second order in the snapshot spacing
        assert s1 / s2 > 3.0


def test_compare_densities():
    g = GridSpec.line(-6, 6, 1200)
    a = gauss(g)
    assert compare_densities(a, a) == 0.0
    spikes = GridSpec.line(0, 1, 16)
    x = np.zeros(16)
    y = np.zeros(16)
    x[2] = y[9] = 1 / spikes.dx
    assert compare_densities(DensityField(spikes, x), DensityField(spikes, y)) == pytest.approx(2.0)
    b = gauss(g, 0.1)
    exact = 2 * math.erf(0.1 / (2 * math.sqrt(2)))
    assert compare_densities(a, b) == pytest.approx(exact, rel=0.01)
    with pytest.raises(ConfigurationError):
        compare_densities(a, gauss(GridSpec.line(-6, 6, 100)))
