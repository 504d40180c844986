import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wickcgl.dyadic import (BesovParams, DyadicPartition, besov_from_blocks, besov_norm, block_norms,
                            build_partition, bony_decompose, chi, chi_minus1, collocation_size, lp_block,
                            lp_norm, lq_sum, partition_for, psi)
from wickcgl.errors import ConfigurationError, InputError
from wickcgl.spectral import Grid, SpectralField, pairing
from wickcgl.studies import block_normalised_fields, lp_suite, pi_decay


def test_profiles_and_supports():
    assert chi_minus1(0) == 1 and chi(0) == 0
    r = np.linspace(0, 3, 3001)
    assert np.all(psi(r[r <= 1]) == 1) and np.all(psi(r[r >= 4 / 3]) == 0)
    c = chi(r)
    assert np.all(c[(r < 1) | (r > 8 / 3)] == 0) and np.all(c >= 0)


def test_mode_two_blocks():
    part = build_partition(3)
    w = {k: part.weight(k, 2.0) for k in part.blocks}
    assert {k for k, v in w.items() if v > 0} <= {0, 1}


@given(st.integers(0, 6), st.floats(0, 1, allow_nan=False))
def test_partition_of_unity(kmax, frac):
    part = build_partition(kmax)
    r = frac * part.band
    assert sum(part.weight(k, r) for k in part.blocks) == pytest.approx(1.0, abs=1e-12)


def test_partition_validation():
    with pytest.raises(ConfigurationError):
        DyadicPartition(-1)
    with pytest.raises(InputError):
        build_partition(2).weight(5, 1.0)
    with pytest.raises(ConfigurationError):
        BesovParams(0.0, p=0.5)
    assert partition_for(1).kmax == 0 and partition_for(16).kmax == 3 and partition_for(17).kmax == 4


def test_blocks_of_constant():
    g = Grid(4)
    one = g.mode((0, 0))
    part = partition_for(4)
    np.testing.assert_array_equal(lp_block(one, -1, part).coeffs, one.coeffs)
    assert np.all(lp_block(one, 1, part).coeffs == 0)
    for a, p, q in [(0.3, 2, 1), (-0.5, math.inf, math.inf), (1.0, 3, 2)]:
        assert besov_norm(one, BesovParams(a, p, q)) == pytest.approx(1.0, rel=1e-12)


def test_reconstruction(rng):
    g = Grid(16)
    part = partition_for(16)
    f = g.random(rng, batch=(10,))
    total = sum(lp_block(f, k, part).coeffs for k in part.blocks)
    np.testing.assert_allclose(total, f.coeffs, atol=1e-12)


def test_single_mode_norm():
    g = Grid(16)
    part = partition_for(16)
    m = (5, 0)
    f = g.mode(m)
    alpha = 0.4
    want = max(2.0 ** (alpha * max(k, 0)) * part.weight(k, 5.0) for k in part.blocks)
    assert besov_norm(f, BesovParams(alpha), part) == pytest.approx(want, rel=1e-12)


def test_frozen_norms():
    g = Grid(8)
    f = g.mode((3, 1), 1.0) + g.mode((0, 0), 0.5j) + g.mode((-5, 2), -0.25)
    assert besov_norm(f, BesovParams(-0.5)) == pytest.approx(0.7071067811865476, rel=1e-12)
    assert besov_norm(f, BesovParams(0.3, 2, 2)) == pytest.approx(1.3817756188632897, rel=1e-12)
    assert besov_norm(f, BesovParams(0.0, 4, 1)) == pytest.approx(1.75, rel=1e-12)


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_homogeneity(c):
    g = Grid(6)
    f = g.random(np.random.default_rng(0))
    for p in (2, math.inf):
        P = BesovParams(0.2, p, 2)
        assert besov_norm(c * f, P) == pytest.approx(abs(c) * besov_norm(f, P), rel=1e-10)


def test_lp_exact_for_even_p(rng):
    g = Grid(5)
    f = g.random(rng)
    a = lp_norm(f, 4, N=collocation_size(5, 4))
    b = lp_norm(f, 4, N=64)
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ConfigurationError):
        collocation_size(5, 4, N=20)


def test_lq_sum_matches_norm():
    x = np.array([3.0, 4.0, 0.0])
    assert lq_sum(x, 2) == pytest.approx(5.0)
    assert lq_sum(x, math.inf) == 4.0
    assert lq_sum(x, 1) == 7.0


def test_besov_from_blocks_consistent(rng):
    g = Grid(8)
    f = g.random(rng, batch=(3,))
    part = partition_for(8)
    blocks = block_norms(f, 2, part)
    np.testing.assert_allclose(besov_from_blocks(blocks, 0.5, 2, part), besov_norm(f, BesovParams(0.5, 2, 2)))


def test_block_norm_chunking_is_invisible(rng):
    g = Grid(8)
    f = g.random(rng, batch=(7,))
    part = partition_for(8)
    np.testing.assert_allclose(block_norms(f, 4, part), block_norms(f, 4, part, max_elements=1000), rtol=1e-14)


def test_band_guard():
    with pytest.raises(ConfigurationError):
        besov_norm(Grid(16).zeros(), BesovParams(0.0), build_partition(2))


def test_embedding_suite():
    r = lp_suite(fields=100)
    assert r["reconstruction_error"] <= 1e-12
    assert r["violations"] == {"alpha": 0, "p": 0, "interp": 0}


def test_bony_sum_is_product(rng):
    g = Grid(8)
    f, h = g.random(rng), g.random(rng)
    parts = bony_decompose(f, h)
    big = parts[0].grid
    total = sum(p.coeffs for p in parts)
    exact = big.from_grid(f.rebin(big).to_grid() * h.rebin(big).to_grid())
    assert np.max(np.abs(total - exact)) <= 1e-10


def test_bony_special_cases():
    g = Grid(32)
    one = g.mode((0, 0))
    a, r, b = bony_decompose(one, one)
    assert np.max(np.abs(a.coeffs)) < 1e-14 and np.max(np.abs(b.coeffs)) < 1e-14
    assert r.coeffs[32 * 2, 32 * 2] == pytest.approx(1.0)
    hi = g.mode((24, 0))  # block 4 only
    assert partition_for(32).weight(4, 24.0) == 1.0
    a, r, b = bony_decompose(one, hi)
    big = a.grid
    assert a.coeffs[big.n + 24, big.n] == pytest.approx(1.0)
    assert np.max(np.abs(r.coeffs)) < 1e-14 and np.max(np.abs(b.coeffs)) < 1e-14
    with pytest.raises(InputError):
        bony_decompose(one, Grid(16).zeros())


def _constants(n, rng):
    g = Grid(n)
    f = block_normalised_fields(g, 0.5, 10, rng)
    h = block_normalised_fields(g, -0.5, 10, rng)
    dual = np.abs(pairing(f, h)) / (besov_norm(f, BesovParams(0.5, 2, 2)) * besov_norm(h, BesovParams(-0.5, 2, 2)))
    para = []
    for i in range(4):
        fi, hi = SpectralField(g, f.coeffs[i]), SpectralField(g, h.coeffs[i])
        fa = block_normalised_fields(g, 0.75, 1, rng)
        fa = SpectralField(g, fa.coeffs[0])
        _, res, _ = bony_decompose(fa, SpectralField(g, hi.coeffs) * 1.0)
        para.append(float(besov_norm(res, BesovParams(0.25)) /
                          (besov_norm(fa, BesovParams(0.75)) * besov_norm(hi, BesovParams(-0.5)))))
    return float(dual.max()), max(para)


def test_duality_and_paraproduct_constants_bounded():
    rng = np.random.default_rng(8)
    c = np.array([_constants(n, rng) for n in (8, 16, 32)])
    assert np.all(c[1:, 0] <= 1.5 * c[0, 0])
    assert np.all(c[1:, 1] <= 1.5 * c[0, 1])


def test_pi_operator_norm_uniform():
    rng = np.random.default_rng(2)
    from wickcgl.spectral import project_pi

    g = Grid(64, 130, dealias=False)
    f = block_normalised_fields(g, 0.5, 6, rng)
    ratios = [float(np.max(besov_norm(project_pi(f, n), BesovParams(0.5)) / besov_norm(f, BesovParams(0.5))))
              for n in (8, 16, 32, 64)]
    assert max(ratios) <= 1.5 * min(ratios)


def test_pi_decay_rate():
    r = pi_decay()
    assert r["slope"] <= -0.45
