import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wickcgl.errors import InputError
from wickcgl.kernels import kernel_KM, kernel_KM_fourier, script_K, script_K0_bessel
from wickcgl.studies import kernel_log_sweep

coord = st.floats(-0.5, 0.5, allow_nan=False)


def test_frozen_values():
    assert kernel_KM(0.01, (0.1, 0.2), 1.0) == pytest.approx(2.9443449420022474 - 0.4748667692696795j, rel=1e-12)
    assert script_K(0.0, (0.1, 0.0), 1.0) == pytest.approx(0.5786970553185353, rel=1e-8)


@given(coord, coord, st.floats(0.001, 0.5), st.floats(0.2, 3.0))
def test_kernel_even(x1, x2, t, mu):
    assert kernel_KM(t, (x1, x2), mu) == pytest.approx(kernel_KM(t, (-x1, -x2), mu), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("t,mu", [(0.05, 1.0), (0.1, 0.5), (0.3, 2.0)])
def test_poisson_summation(t, mu):
    pts = np.array([[0.0, 0.0], [0.1, 0.37], [0.45, -0.2], [0.5, 0.5]])
    a = kernel_KM(t, pts, mu)
    b = kernel_KM_fourier(t, pts, mu)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_kernel_mass():
    N = 64
    x = np.arange(N) / N
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
    for t in (0.05, 0.2):
        assert np.mean(kernel_KM(t, pts, 1.0)) == pytest.approx(math.exp(-t), rel=1e-10)


def test_kernel_rejects_nonpositive_time():
    with pytest.raises(InputError):
        kernel_KM(0.0, (0.1, 0.1), 1.0)


@pytest.mark.parametrize("x", [(0.05, 0.0), (0.2, 0.13), (0.4, 0.4)])
def test_script_K_conjugation(x):
    assert script_K(-0.02, x, 1.0) == pytest.approx(np.conj(script_K(0.02, x, 1.0)), abs=1e-8)


@pytest.mark.parametrize("x,mu", [((0.01, 0.0), 1.0), ((0.2, 0.1), 1.0), ((0.3, 0.0), 0.5)])
def test_script_K_bessel(x, mu):
    assert script_K(0.0, x, mu).real == pytest.approx(script_K0_bessel(x, mu), abs=1e-8)
    assert abs(script_K(0.0, x, mu).imag) <= 1e-8


def test_script_K_singular():
    with pytest.raises(InputError):
        script_K(0.0, (1.0, 0.0), 1.0)


def test_log_asymptotic():
    r = kernel_log_sweep(1.0)
    assert r["max_abs_deviation"] <= 1.0
    assert abs(r["slope"]) < 0.02
    dev = np.array(r["deviation"])
    assert dev.max() - dev.min() <= 1.0


def test_log_bound_constant():
    xs = np.logspace(-4, math.log10(0.4), 10)
    for tau in (0.0, 0.01, -0.05):
        C = [abs(script_K(tau, (x, 0.0), 1.0)) / (1 + math.log(1 / x)) for x in xs]
        assert max(C) <= 0.3


def test_time_holder_constant():
    lam = 0.4
    C = [abs(script_K(tau, (x, 0.0), 1.0) - script_K(tau + d, (x, 0.0), 1.0)) * x ** (2 * lam) / d ** lam
         for tau in (0.0, 0.01, 0.05) for d in (1e-3, 1e-2, 5e-2) for x in (0.01, 0.05, 0.2)]
    assert max(C) <= 0.1
