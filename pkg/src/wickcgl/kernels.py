"""Periodised complex heat kernel ``K_M`` and its time integral ``script_K`` on the unit torus."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .errors import InputError

_TAIL = math.log(1e14)


def _images(radius: float):
    k = int(math.ceil(radius)) + 1
    r = np.arange(-k, k + 1)
    y1, y2 = np.meshgrid(r, r, indexing="ij")
    return y1.ravel().astype(float), y2.ravel().astype(float)


def image_radius(tau_real: float, mu_eff: float) -> float:
    """Distance beyond which ``exp(-r^2 mu_eff / (4 tau_real))`` is below 1e-14."""
    return math.sqrt(4.0 * tau_real * _TAIL / mu_eff)


def _wrap(x):
    x = np.asarray(x, dtype=float)
    return x - np.round(x)


def kernel_KM(t: float, x, mu: float, image_cutoff: int | None = None):
    """``sum_y e^{-t} / (4 pi (i+mu) t) exp(-|x-y|^2 / (4 (i+mu) t))`` over ``y`` in Z^2.

    ``x`` has shape ``(..., 2)``.  The Gaussian envelope decays at rate
    ``mu / (1 + mu^2)``, which sets the default image radius.
    """
    if not t > 0:
        raise InputError("t must be positive")
    x = _wrap(x)
    z = (1j + mu) * t
    if image_cutoff is None:
        image_cutoff = int(math.ceil(image_radius(t, mu / (1 + mu * mu)))) + 1
    y1, y2 = _images(image_cutoff)
    d2 = (x[..., 0, None] - y1) ** 2 + (x[..., 1, None] - y2) ** 2
    vals = np.exp(-d2 / (4 * z))
    return math.exp(-t) / (4 * np.pi * z) * vals.sum(axis=-1)


def kernel_KM_fourier(t: float, x, mu: float, radius: int = 12):
    """Poisson-dual series ``sum_m e^{-t(4 pi^2 (i+mu)|m|^2 + 1)} e_m(x)``."""
    x = np.asarray(x, dtype=float)
    r = np.arange(-radius, radius + 1)
    m1, m2 = [a.ravel() for a in np.meshgrid(r, r, indexing="ij")]
    lam = 4 * np.pi ** 2 * (1j + mu) * (m1 ** 2 + m2 ** 2) + 1
    phase = np.exp(2j * np.pi * (x[..., 0, None] * m1 + x[..., 1, None] * m2))
    return (np.exp(-t * lam) * phase).sum(axis=-1)


def _fourier_tail(delta: float, x, mu: float, s0: float):
    """``int_{s0}^inf`` of the image sum, written as a rapidly convergent Fourier series."""
    radius = max(4, int(math.ceil(math.sqrt((40.0 + 10) / (4 * np.pi ** 2 * mu * s0)))) + 1)
    r = np.arange(-radius, radius + 1)
    m1, m2 = [a.ravel() for a in np.meshgrid(r, r, indexing="ij")]
    k2 = (m1 ** 2 + m2 ** 2).astype(float)
    L = 1.0 + 4 * np.pi ** 2 * mu * k2
    coef = 0.5 * np.exp(-4j * np.pi ** 2 * delta * k2) * np.exp(-s0 * L) / L
    return np.sum(coef * np.exp(2j * np.pi * (x[0] * m1 + x[1] * m2)))


def _image_integrand(s, delta, x, mu):
    z = 1j * delta + mu * s
    rad = image_radius(mu * s, mu) + 0.0
    y1, y2 = _images(rad)
    d2 = (x[0] - y1) ** 2 + (x[1] - y2) ** 2
    return math.exp(-s) / (8 * np.pi * z) * np.exp(-d2 / (4 * z)).sum()


def script_K(delta: float, x, mu: float, s_split: float = 0.05, tol: float = 1e-10):
    """``sum_y int_{|delta|}^inf e^{-s} / (8 pi (i delta + mu s)) exp(-|x-y|^2 / (4 (i delta + mu s))) ds``.

    The short-time part is integrated in ``log s`` over the image sum; the part
    beyond ``max(|delta|, s_split)`` is summed in closed form over Fourier modes.
    """
    x = _wrap(np.asarray(x, dtype=float).reshape(2))
    r2 = float(x @ x)
    if delta == 0 and r2 == 0:
        raise InputError("script_K(0; x) is singular at x = 0")
    lo = abs(delta)
    s0 = max(lo, s_split)
    total = _fourier_tail(delta, x, mu, s0)
    if lo < s0:
        if lo == 0:
            lo = max(r2 / (4 * mu * 60.0), 1e-300)
        a, b = math.log(lo), math.log(s0)
        if a < b:
            mid = math.log(max(min(r2 / (4 * mu), s0), lo))
            pts = [mid] if a < mid < b else None

            def f(v):
                s = math.exp(v)
                return _image_integrand(s, delta, x, mu) * s

            val, _ = integrate.quad(f, a, b, points=pts, limit=400, epsabs=tol, epsrel=1e-10,
                                    complex_func=True)
            total += val
    return complex(total)


def script_K0_bessel(x, mu: float, images: int = 40):
    """``script_K(0; x) = sum_y K_0(|x-y| / sqrt(mu)) / (4 pi mu)`` (closed form)."""
    from scipy.special import k0

    x = _wrap(np.asarray(x, dtype=float).reshape(2))
    y1, y2 = _images(images)
    d = np.sqrt((x[0] - y1) ** 2 + (x[1] - y2) ** 2)
    return float(np.sum(k0(d / math.sqrt(mu)))) / (4 * np.pi * mu)
