import math

import numpy as np
import pytest
from scipy import stats

from wickcgl.errors import ConfigurationError, InputError
from wickcgl.hermite import hermite_eval
from wickcgl.ou import (NoiseSource, OUState, exact_variance, fine_increment, nonstationary_shift, ou_em_step,
                        ou_exact_step, ou_initial, renorm_constant, renorm_terms, wick_bundle, z_norm)
from wickcgl.spectral import Grid, cutoff_array, lambda_A, product
from wickcgl.studies import ou_stationary_variance, renorm_slope


def test_renorm_frozen():
    assert renorm_constant(1, 1.0).value == 0.5
    assert renorm_constant(16, 1.0).value == pytest.approx(0.7230673794716115, rel=1e-14)
    assert renorm_constant(64, 0.5).value == pytest.approx(1.1631037619264595, rel=1e-14)
    assert float(renorm_constant(4, 2.0)) == pytest.approx(math.fsum(renorm_terms(4, 2.0)), rel=1e-15)
    with pytest.raises(ConfigurationError):
        renorm_constant(0, 1.0)


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0])
def test_renorm_log_slope(mu):
    r = renorm_slope(mu)
    assert r["rel_error"] <= 0.10


def test_renorm_matches_pointwise_variance():
    g = Grid(6)
    noise = NoiseSource(4, np.arange(20000))
    Z = ou_initial(g, 1.0, noise, "stationary").Z
    v = np.abs(g.to_grid(Z.coeffs)[:, 3, 5]) ** 2
    c = renorm_constant(6, 1.0).value
    assert abs(v.mean() - c) <= 3 * v.std() / math.sqrt(v.size)


def test_stationary_modes_and_halfsteps():
    r = ou_stationary_variance()
    assert r["max_z"] <= 3
    assert r["mean_map_err"] <= 1e-14 and r["var_rel_err"] <= 1e-14


def test_dead_modes_decay_deterministically():
    g = Grid(4)
    noise = NoiseSource(1, np.arange(2))
    Z0 = g.random(np.random.default_rng(0), batch=(2,))
    st = ou_exact_step(OUState(0.0, Z0), 0.01, noise, 1.0)
    dead = cutoff_array(g) == 0
    lam = lambda_A(1.0).values(g)
    np.testing.assert_allclose(st.Z.coeffs[:, dead & g.mask], (np.exp(-0.01 * lam) * Z0.coeffs)[:, dead & g.mask])


def test_em_without_noise_is_exact_mean():
    g = Grid(4)
    Z0 = g.random(np.random.default_rng(1))
    a = ou_em_step(OUState(0.0, Z0), 0.02, np.zeros(g.shape), 1.0)
    lam = lambda_A(1.0).values(g)
    np.testing.assert_allclose(a.Z.coeffs, np.exp(-0.02 * lam) * Z0.coeffs * g.mask)
    with pytest.raises(InputError):
        ou_em_step(OUState(0.0, Z0), 0.0, np.zeros(g.shape), 1.0)


def test_em_one_step_variance_second_order():
    g = Grid(4)
    lam, a = lambda_A(1.0).values(g), cutoff_array(g)
    errs = []
    for h in (1e-4, 5e-5):
        em = np.abs(np.exp(-lam * h)) ** 2 * a ** 2 * h
        errs.append(np.max(np.abs(em - a ** 2 * exact_variance(lam, h))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_em_strong_convergence():
    g = Grid(2)
    noise = NoiseSource(21, np.arange(64))
    T, hs, fine = 0.05, (1e-3, 5e-4, 2.5e-4), 64

    def run(h, refine):
        st = OUState(0.0, g.zeros((64,)))
        for k in range(int(round(T / h))):
            st = ou_em_step(st, h, fine_increment(noise, g, k, h, refine), 1.0)
        return st.Z.coeffs

    hmin = hs[0] / fine
    ref = run(hmin, 1)
    errs = [np.sqrt(np.mean(np.sum(np.abs(run(h, int(round(h / hmin))) - ref) ** 2, axis=(-2, -1)))) for h in hs]
    for a, b in zip(errs, errs[1:]):
        assert 1.5 <= a / b <= 2.5


def test_initial_validation():
    with pytest.raises(ConfigurationError):
        ou_initial(Grid(2), 1.0, NoiseSource(0), "hot")


def test_bundle_of_zero_and_plain_powers(rng):
    g = Grid(4)
    b = wick_bundle(g.zeros(), 0.3)
    assert b.z11.coeffs[4, 4] == pytest.approx(-0.3)
    for f in (b.z10, b.z20, b.z21):
        assert np.all(f.coeffs == 0)
    Z = g.random(rng) * 0.2
    p = wick_bundle(Z, 0.0)
    np.testing.assert_allclose(p.z20.coeffs, product(Z, Z).coeffs, atol=1e-13)
    np.testing.assert_allclose(wick_bundle(Z, 0.5).z20.coeffs, p.z20.coeffs, atol=1e-13)
    assert np.max(np.abs(g.to_grid(wick_bundle(Z, 0.5).z11.coeffs).imag)) <= 1e-12
    with pytest.raises(ConfigurationError):
        wick_bundle(Grid(4, 12, dealias=False).zeros(), 0.0)


def test_z11_mean_zero_under_stationary_law():
    g = Grid(6)
    noise = NoiseSource(6, np.arange(20000))
    Z = ou_initial(g, 1.0, noise, "stationary").Z
    mean = wick_bundle(Z, renorm_constant(6, 1.0)).z11.coeffs[:, 6, 6].real
    assert abs(mean.mean()) <= 3 * mean.std() / math.sqrt(mean.size)


def _ou_path(g, noise, dt, steps, mu=1.0):
    st = ou_initial(g, mu, noise)
    out = [st.Z]
    for _ in range(steps):
        st = ou_exact_step(st, dt, noise, mu)
        out.append(st.Z)
    return out


def test_shift_zero_and_binomial_identity():
    g = Grid(6)
    noise = NoiseSource(8, np.arange(3))
    mu, dt = 1.0, 0.01
    path = _ou_path(g, noise, dt, 8)
    zs, zt, zth = path[2], path[5], path[8]
    b0 = nonstationary_shift(zs, zs, 0.0, 0.4, mu)
    assert np.all(b0.z10.coeffs == 0) and np.all(b0.z21.coeffs == 0)
    with pytest.raises(InputError):
        nonstationary_shift(zs, zt, -1.0, 0.4, mu)
    lam, a = lambda_A(mu).values(g), cutoff_array(g)
    s_t, h = 3 * dt, 3 * dt
    c1 = float(np.sum(a ** 2 * np.abs(np.exp(-h * lam)) ** 2 * exact_variance(lam, s_t)))
    c2 = float(np.sum(a ** 2 * exact_variance(lam, h)))
    X = g.to_grid(np.exp(-h * lam) * (zt.coeffs - np.exp(-s_t * lam) * zs.coeffs))
    Y = g.to_grid(zth.coeffs - np.exp(-h * lam) * zt.coeffs)
    lhs = g.to_grid(nonstationary_shift(zs, zth, s_t + h, c1 + c2, mu).z21.coeffs)
    rhs = sum(math.comb(2, i) * math.comb(1, j) * hermite_eval(i, j, X, c1) * hermite_eval(2 - i, 1 - j, Y, c2)
              for i in range(3) for j in range(2))
    rhs = g.to_grid(g.from_grid(rhs))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_shift_law_stationary_in_s():
    g = Grid(4)
    noise = NoiseSource(10, np.arange(1000))
    path = _ou_path(g, noise, 0.05, 6)
    stat = lambda s, t: nonstationary_shift(path[s], path[t], 0.05 * (t - s), 0.0, 1.0).z10.l2()
    res = stats.ks_2samp(stat(1, 2), stat(4, 5))
    assert res.pvalue > 0.01


def test_z_norm_weights():
    g = Grid(4)
    b = wick_bundle(g.zeros(), 1.0)
    # only z11 = -c e_0 is nonzero, with B^{-a} norm c
    assert z_norm(b, 0.25, 0.5) == pytest.approx(0.25 ** 0.5)
