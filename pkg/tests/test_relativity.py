import numpy as np
import pytest
import sympy as sp
from scipy.integrate import solve_ivp

from emergelab import analytic as A
from emergelab.errors import ConfigurationError, DomainError
from emergelab.metric import Lattice, MetricField, from_spatial
from emergelab.relativity import (christoffel, eh_action, einstein_residual, einstein_variation_check,
                                  geodesic_extremality, geodesic_integrate, interaction_entropy, lambda_functional, path_from_function,
                                  proper_time, ricci, sample_velocities, velocity_moment_error)
from emergelab.spacetime import NeuronEnsemble, SpatialGrid, metric_field, neuron_count, perturbed_ensemble

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
T_, X_, Y_, Z_ = sp.symbols("t x y z", real=True)
COORDS = (T_, X_, Y_, Z_)


def sym_christoffel(g):
    gi = g.inv()
    return [[[sp.Rational(1, 2) * sum(gi[m, n] * (sp.diff(g[n, a], COORDS[b]) + sp.diff(g[n, b], COORDS[a])
                                                   - sp.diff(g[a, b], COORDS[n])) for n in range(4))
              for b in range(4)] for a in range(4)] for m in range(4)]


def sym_ricci(G):
    R = sp.zeros(4, 4)
    for a in range(4):
        for b in range(4):
            R[a, b] = sum(sp.diff(G[m][a][b], COORDS[m]) for m in range(4)) \
                - sum(sp.diff(G[m][a][m], COORDS[b]) for m in range(4)) \
                + sum(G[m][a][b] * G[c][c][m] for m in range(4) for c in range(4)) \
                - sum(G[m][a][c] * G[c][b][m] for m in range(4) for c in range(4))
    return R


def flat_box(n=8):
    return A.flat(A.box(n, length=4.0))


# --- flat-space zero suite ------------------------------------------------------------


def test_flat_zero_suite():
    mf = flat_box()
    c = christoffel(mf)
    assert np.abs(c.gamma).max() < 1e-12
    r = ricci(mf, c)
    assert np.abs(r.R).max() < 1e-12 and r.asymmetry == 0
    rep = eh_action(mf)
    assert abs(rep.gamma_gamma_value) < 1e-10 and abs(rep.ricci_value) < 1e-10


def test_flat_einstein_residual_with_lambda_exact():
    mf = flat_box()
    assert einstein_residual(mf, 0.0).norm() < 1e-12
    res = einstein_residual(mf, 0.37)
    assert np.all(res.residual == 0.37 * ETA)


def test_flat_geodesic_straight():
    lat = Lattice((0, -10, -10, -10), (1.0, 0.5, 0.5, 0.5), (1, 41, 41, 41))
    mf = A.flat(lat)
    v = np.array([0.3, -0.2, 0.4])
    p = geodesic_integrate(mf, [0, 0, 0, 0], np.concatenate([[1.0], v]), 10.0, dt=0.05)
    assert not p.exited
    assert np.abs(p.x - p.t[:, None] * v).max() < 1e-8
    assert proper_time(mf, p) == pytest.approx(10 * np.sqrt(1 - v @ v), rel=1e-12)


def test_constant_curved_metric_actions_vanish():
    lat = A.box(6, length=3.0)
    G = np.array([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 0.7]])
    mf = MetricField(lat, from_spatial(lat, G))
    rep = eh_action(mf)
    assert rep.gamma_gamma_value == 0 and rep.ricci_value == 0


# --- Christoffel symbols against symbolic oracles ------------------------------------


def test_christoffel_lower_symmetry_exact():
    mf = A.periodic_perturbation(A.box(12), 0.1)
    gam = christoffel(mf).gamma
    assert np.array_equal(gam, np.swapaxes(gam, -1, -2))


def test_frw_christoffel_and_ricci_against_sympy():
    a = T_
    g = sp.diag(-1, a**2, a**2, a**2)
    G = sym_christoffel(g)
    R = sym_ricci(G)
    assert sp.simplify(G[1][0][1] - 1 / T_) == 0
    lat = Lattice((1.0, 0, 0, 0), (0.01, 0.5, 0.5, 0.5), (101, 4, 4, 4), (False, True, True, True))
    mf = A.frw(lat)
    c = christoffel(mf)
    r = ricci(mf, c)
    Gf = sp.lambdify(T_, sp.Array(G), "numpy")
    Rf = sp.lambdify(T_, R, "numpy")
    for i in (10, 50, 90):
        t = lat.axis(0)[i]
        np.testing.assert_allclose(c.gamma[i, 0, 0, 0], np.array(Gf(t), dtype=float), atol=1e-12)
        np.testing.assert_allclose(r.R[i, 1, 2, 3], np.array(Rf(t), dtype=float), atol=5e-4)
    assert not c.valid[0].any() and not c.valid[-1].any()
    assert not r.valid[1].any() and r.valid[2].all()


def test_conformally_flat_second_order():
    grad = np.array([0.2, -0.1, 0.05])
    phi_s = grad[0] * X_ + grad[1] * Y_ + grad[2] * Z_
    G = np.array(sp.Array(sym_christoffel(sp.diag(-1, *(sp.exp(2 * phi_s),) * 3))).subs({X_: 0, Y_: 0, Z_: 0}),
                 dtype=float)
    np.testing.assert_allclose(G, A.conformal_christoffel(grad), atol=1e-15)
    errs = []
    for h in (0.2, 0.1):
        n = 11
        lat = Lattice((0, -5 * h, -5 * h, -5 * h), (1.0, h, h, h), (1, n, n, n))
        mf = A.conformally_flat(lat, lambda t, x, y, z: grad[0] * x + grad[1] * y + grad[2] * z)
        errs.append(np.abs(christoffel(mf).gamma[0, 5, 5, 5] - G).max())
    assert errs[1] < 1e-3
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_weak_periodic_ricci_matches_linearised():
    eps = 1e-3
    h = sp.Matrix([[sp.sin(X_) * sp.cos(Y_), sp.sin(X_ + Y_) / 2, 0],
                   [sp.sin(X_ + Y_) / 2, sp.cos(Y_ + Z_), sp.Rational(3, 10) * sp.cos(Z_ - X_)],
                   [0, sp.Rational(3, 10) * sp.cos(Z_ - X_), sp.sin(Z_) * sp.sin(X_)]])
    xs = (X_, Y_, Z_)
    tr = h.trace()
    lin = sp.Matrix(3, 3, lambda a, b: sp.Rational(1, 2) * (
        sum(sp.diff(h[b, c], xs[c], xs[a]) + sp.diff(h[a, c], xs[c], xs[b]) - sp.diff(h[a, b], xs[c], xs[c])
            for c in range(3)) - sp.diff(tr, xs[a], xs[b])))
    f = sp.lambdify((X_, Y_, Z_), lin, "numpy")
    errs = []
    for n in (16, 32):
        lat = A.box(n)
        mf = A.periodic_perturbation(lat, eps)
        R = ricci(mf).R[0]
        worst = 0.0
        for idx in [(1, 2, 3), (n // 2, n // 3, n // 4), (n - 1, 0, n // 2)]:
            x = [lat.axis(k + 1)[idx[k]] for k in range(3)]
            worst = max(worst, np.abs(R[idx][1:, 1:] - eps * np.array(f(*x), dtype=float)).max())
        errs.append(worst / eps)
    assert errs[1] < 0.02
    assert errs[0] / errs[1] > 3.5


def test_ricci_symmetry_residual_small():
    r = ricci(A.periodic_perturbation(A.box(16), 0.05))
    assert r.asymmetry < 1e-4


# --- actions --------------------------------------------------------------------------


def test_action_forms_converge_second_order():
    vals = []
    for n in (16, 32):
        rep = eh_action(A.periodic_perturbation(A.box(n), 0.05))
        vals.append(abs(rep.gamma_gamma_value - rep.ricci_value) / abs(rep.ricci_value))
    assert vals[1] < 0.05
    assert abs(np.log2(vals[0] / vals[1]) - 2) < 0.3


def test_lambda_functional_flat_unit_volume():
    lat = A.box(4, length=1.0)
    mf = A.flat(lat)
    assert lambda_functional(mf, 1.0, 1.0).total == pytest.approx(0.0, abs=1e-14)
    assert lambda_functional(mf, 1.0, 0.0).total == pytest.approx(-2.0, rel=1e-14)


def test_lambda_sensitivity_vanishes_with_neuron_count():
    _, _, ens = perturbed_ensemble(np.random.default_rng(0), 16, 0.05)
    grid = SpatialGrid.around(ens, n=24)
    mf = metric_field(ens, grid)
    nbar = neuron_count(ens, grid)
    d = (lambda_functional(mf, 1.0, nbar).total - lambda_functional(mf, -1.0, nbar).total) / 2
    assert abs(d) < 1e-9 * nbar


def test_einstein_variation_weak_field():
    mf = A.periodic_perturbation(A.box(24), 0.05)
    check = einstein_variation_check(mf, 0.0, n_nodes=3, seed=1)
    assert check.relative < 0.05
    assert len(check.samples) == 3 * 7


def test_einstein_variation_with_lambda():
    mf = A.periodic_perturbation(A.box(16), 0.05)
    assert einstein_variation_check(mf, 0.4, n_nodes=2).relative < 0.05


# --- geodesics and proper time --------------------------------------------------------


def weak_lattice():
    return Lattice((0, -3, -3, -3), (1.0, 0.1, 0.1, 0.1), (1, 61, 61, 61))


def test_weak_field_deflection_matches_reference():
    phi0 = 0.02
    mf = A.weak_field(weak_lattice(), lambda t, x, y, z: phi0 * x)
    v0 = np.array([0.3, 0.5, 0.0])
    T = 2.0
    p = geodesic_integrate(mf, [0, 0, 0, 0], np.concatenate([[1.0], v0]), T, dt=0.01)

    def rhs(t, y):
        x, v = y[:3], y[3:]
        s = 1 + 2 * phi0 * x[0]
        d = np.array([phi0, 0, 0])
        Gam = (np.einsum("ab,c->abc", np.eye(3), d) + np.einsum("ac,b->abc", np.eye(3), d)
               - np.einsum("bc,a->abc", np.eye(3), d)) / s
        return np.concatenate([v, -np.einsum("abc,b,c->a", Gam, v, v)])

    ref = solve_ivp(rhs, (0, T), np.concatenate([np.zeros(3), v0]), rtol=1e-12, atol=1e-14).y[:3, -1]
    straight = v0 * T
    dev_num, dev_ref = p.x[-1] - straight, ref - straight
    assert np.abs(dev_num - dev_ref).max() < 0.01 * np.abs(dev_ref).max()


def test_proper_time_norm_and_parameterizations_agree():
    mf = A.weak_field(weak_lattice(), lambda t, x, y, z: 0.02 * x)
    v = [1.0, 0.3, 0.2, -0.1]
    pp = geodesic_integrate(mf, [0, 0.2, 0, 0], v, 3.0, dt=0.01, parameterization="proper")
    pc = geodesic_integrate(mf, [0, 0.2, 0, 0], v, 3.0, dt=0.01)
    assert pp.stats["norm_drift"] < 1e-6
    assert pp.t[-1] == pytest.approx(3.0, abs=1e-12)
    assert np.abs(pp.x[-1] - pc.x[-1]).max() < 1e-6
    assert pp.tau[-1] == pytest.approx(pc.tau[-1], rel=1e-6)


def test_norm_drift_is_second_order_in_spacing():
    # curved fields: the finite-difference Gamma is consistent with g only to O(dx^2)
    drifts = []
    for h in (0.1, 0.05):
        n = int(round(2.4 / h)) + 1
        lat = Lattice((0, -1.2, -1.2, -1.2), (1.0, h, h, h), (1, n, n, n))
        mf = A.weak_field(lat, lambda t, x, y, z: 0.05 * np.sin(2 * x) * np.cos(y))
        p = geodesic_integrate(mf, [0, -0.3, 0, 0], [1, 0.3, 0.2, -0.1], 1.5, dt=0.005, parameterization="proper")
        drifts.append(p.stats["norm_drift"])
    assert 3.0 < drifts[0] / drifts[1] < 5.0


def test_path_exit_flag():
    mf = A.flat(Lattice((0, -1, -1, -1), (1.0, 0.1, 0.1, 0.1), (1, 21, 21, 21)))
    p = geodesic_integrate(mf, [0, 0, 0, 0], [1, 0.5, 0, 0], 10.0, dt=0.01)
    assert p.exited and p.x[-1, 0] <= 1.0 and p.t[-1] < 10


def test_proper_time_examples():
    mf = flat_box(6)
    t = np.linspace(0, 1, 11)
    still = path_from_function(t, lambda t: np.zeros((len(t), 3)), lambda t: np.zeros((len(t), 3)))
    assert proper_time(mf, still) == pytest.approx(1.0, rel=1e-14)
    moving = path_from_function(t, lambda t: np.outer(t, [0.6, 0, 0]), lambda t: np.tile([0.6, 0, 0], (len(t), 1)))
    assert proper_time(mf, moving) == pytest.approx(0.8, rel=1e-14)
    fast = path_from_function(t, lambda t: np.outer(t, [0, 0, 0]),
                              lambda t: np.where(t[:, None] > 0.45, [1.2, 0, 0], [0.1, 0, 0]))
    with pytest.raises(DomainError, match="sample 5"):
        proper_time(mf, fast)


def test_geodesic_maximises_proper_time():
    mf = A.weak_field(weak_lattice(), lambda t, x, y, z: 0.05 * np.sin(x + 0.5) * np.cos(y))
    geo = geodesic_integrate(mf, [0, -0.5, 0, 0], [1, 0.4, 0.2, 0.0], 2.0, dt=0.01)
    check = geodesic_extremality(mf, geo, n_paths=100, amplitude=0.05, seed=0)
    assert check.tau_geodesic == pytest.approx(proper_time(mf, geo))
    assert check.max_excess < 0


def test_extremality_unperturbed_path_ties():
    mf = A.weak_field(weak_lattice(), lambda t, x, y, z: 0.02 * x)
    geo = geodesic_integrate(mf, [0, 0, 0, 0], [1, 0.3, 0, 0], 1.0, dt=0.01)
    check = geodesic_extremality(mf, geo, n_paths=3, amplitude=0.0)
    assert check.max_excess == 0


# --- interaction entropy ----------------------------------------------------------------


def _ensemble_field(n_neurons=12, eps=0.1, seed=0, n=24):
    _, _, ens = perturbed_ensemble(np.random.default_rng(seed), n_neurons, eps)
    grid = SpatialGrid.around(ens, n=n)
    return ens, grid, metric_field(ens, grid)


def test_interaction_zero_velocities():
    ens, grid, mf = _ensemble_field()
    rep = interaction_entropy(ens.with_velocities(np.zeros((ens.count, 3, 3))), mf)
    assert np.all(rep.field == 0) and rep.residual == 0


def test_interaction_identical_static_balance():
    G = np.diag([1.0, 2.0, 1.5])
    pos = np.random.default_rng(1).uniform(-1, 1, (10, 3))
    ens = NeuronEnsemble(pos, np.repeat(G[None], 10, 0))
    mf = metric_field(ens, SpatialGrid.around(ens, n=24))
    rep = interaction_entropy(sample_velocities(ens, mf, 2000, 3), mf)
    assert abs(rep.residual) < 1e-12


def test_interaction_balance_quadrature():
    ens, grid, mf = _ensemble_field()
    rep = interaction_entropy(sample_velocities(ens, mf, 500, 1), mf)
    assert abs(rep.bulk) > 1e-4
    assert abs(rep.residual) < 1e-6 * abs(rep.bulk)


def test_velocity_moments():
    ens, grid, mf = _ensemble_field()
    ev = sample_velocities(ens, mf, 10_000, 7)
    assert velocity_moment_error(ev, mf) < 0.05


def test_velocity_sampling_deterministic():
    ens, grid, mf = _ensemble_field(n_neurons=4)
    a = sample_velocities(ens, mf, 100, 5).velocities
    b = sample_velocities(ens, mf, 100, 5).velocities
    assert np.array_equal(a, b)


def test_interaction_needs_velocities():
    ens, grid, mf = _ensemble_field(n_neurons=3)
    with pytest.raises(ConfigurationError):
        interaction_entropy(ens, mf)
