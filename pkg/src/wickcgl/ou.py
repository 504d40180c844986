"""Galerkin Ornstein-Uhlenbeck field, its Wick powers and the renormalisation constant."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError
from .hermite import hermite_eval
from .rng import STREAM_INIT, STREAM_NOISE, complex_normal, mode_code
from .spectral import Grid, SpectralField, cutoff_array, cutoff_profile, lambda_A

OU_INITS = ("zero", "stationary")


@dataclass(frozen=True)
class RenormConstant:
    n: int
    mu: float
    value: float

    def __float__(self):
        return self.value


def renorm_terms(n: int, mu: float) -> np.ndarray:
    """Per-mode contributions ``a_m^2 / (2 (4 pi^2 mu |m|^2 + 1))`` over the ball ``|m| <= n``."""
    k = np.arange(-n, n + 1)
    r2 = (k[:, None] ** 2 + k[None, :] ** 2).astype(float).ravel()
    r2 = r2[r2 <= n * n]
    a = cutoff_profile(np.sqrt(r2) / n)
    return a * a / (2.0 * (4 * np.pi ** 2 * mu * r2 + 1.0))


def renorm_constant(n: int, mu: float) -> RenormConstant:
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if not mu > 0:
        raise ConfigurationError("mu must be positive")
    terms = np.sort(renorm_terms(int(n), float(mu)))[::-1]
    return RenormConstant(int(n), float(mu), math.fsum(terms))


def _cval(c) -> float:
    return float(c.value) if isinstance(c, RenormConstant) else float(c)


# -- noise -------------------------------------------------------------------


class NoiseSource:
    """Counter-based complex Gaussians keyed by ``(seed, replica, step, mode)``.

    Draws depend on the mode label, not on the band limit, so grids of
    different size driven by one source see identical increments on shared modes.
    """

    def __init__(self, seed: int, replicas=(0,), stream: int = STREAM_NOISE):
        self.seed = int(seed)
        self.replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
        self.stream = stream
        self._codes = {}

    @property
    def batch(self):
        return (self.replicas.size,)

    def _ball(self, grid: Grid):
        key = grid.n
        if key not in self._codes:
            m1, m2 = grid.modes
            sel = grid.mask
            self._codes[key] = (np.nonzero(sel), mode_code(m1[sel], m2[sel]))
        return self._codes[key]

    def standard(self, grid: Grid, step: int, stream: int | None = None) -> np.ndarray:
        """Standard complex normals (E|G|^2 = 1) on the ball, shape ``(replicas, 2n+1, 2n+1)``."""
        idx, codes = self._ball(grid)
        g = complex_normal(self.seed, self.replicas[:, None], step, codes[None, :],
                           self.stream if stream is None else stream)
        out = np.zeros(self.batch + grid.shape, dtype=complex)
        out[:, idx[0], idx[1]] = g
        return out

    def increment(self, grid: Grid, step: int, h: float) -> np.ndarray:
        """Brownian increments over a step of length ``h``: E|dW_m|^2 = h."""
        return math.sqrt(h) * self.standard(grid, step)

    def sub(self, replicas) -> "NoiseSource":
        return NoiseSource(self.seed, replicas, self.stream)


def fine_increment(noise: NoiseSource, grid: Grid, step: int, h: float, refine: int) -> np.ndarray:
    """Increment over coarse step ``step`` assembled from ``refine`` fine substeps."""
    hf = h / refine
    return sum(noise.increment(grid, step * refine + j, hf) for j in range(refine))


# -- OU dynamics -------------------------------------------------------------


@dataclass
class OUState:
    t: float
    Z: SpectralField
    step: int = 0


def ou_coefficients(grid: Grid, mu: float, cutoff_n: int | None = None):
    lam = lambda_A(mu).values(grid)
    return lam, cutoff_array(grid, cutoff_n)


def ou_initial(grid: Grid, mu: float, noise: NoiseSource, init: str = "zero",
               cutoff_n: int | None = None) -> OUState:
    if init not in OU_INITS:
        raise ConfigurationError(f"ou_init must be one of {OU_INITS}, got {init!r}")
    Z = np.zeros(noise.batch + grid.shape, dtype=complex)
    if init == "stationary":
        lam, a = ou_coefficients(grid, mu, cutoff_n)
        Z = a * np.sqrt(1.0 / (2.0 * lam.real)) * noise.standard(grid, 0, STREAM_INIT)
    return OUState(0.0, SpectralField(grid, Z), 0)


def exact_variance(lam, h):
    """``(1 - exp(-2 Re(lam) h)) / (2 Re(lam))``."""
    r = np.real(lam)
    return -np.expm1(-2.0 * r * h) / (2.0 * r)


def ou_exact_step(state: OUState, h: float, noise: NoiseSource, mu: float,
                  cutoff_n: int | None = None) -> OUState:
    if not h > 0:
        raise InputError("h must be positive")
    grid = state.Z.grid
    lam, a = ou_coefficients(grid, mu, cutoff_n)
    G = noise.standard(grid, state.step)
    Z = np.exp(-lam * h) * state.Z.coeffs + a * np.sqrt(exact_variance(lam, h)) * G
    return OUState(state.t + h, SpectralField(grid, Z * grid.mask), state.step + 1)


def ou_em_step(state: OUState, h: float, dW, mu: float, cutoff_n: int | None = None) -> OUState:
    """Exponential Euler with the left-point increment: ``Z <- e^{-lam h} (Z + a dW)``."""
    if not h > 0:
        raise InputError("h must be positive")
    grid = state.Z.grid
    lam, a = ou_coefficients(grid, mu, cutoff_n)
    dW = dW.coeffs if isinstance(dW, SpectralField) else np.asarray(dW)
    Z = np.exp(-lam * h) * (state.Z.coeffs + a * dW)
    return OUState(state.t + h, SpectralField(grid, Z * grid.mask), state.step + 1)


# -- Wick powers -------------------------------------------------------------

WICK_INDICES = ((1, 0), (2, 0), (1, 1), (2, 1))


@dataclass
class WickBundle:
    z10: SpectralField
    z20: SpectralField
    z11: SpectralField
    z21: SpectralField
    c: float
    values: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, kl):
        return {(1, 0): self.z10, (2, 0): self.z20, (1, 1): self.z11, (2, 1): self.z21}[tuple(kl)]


def wick_values(z, c):
    """Pointwise ``(Z, Z^2, |Z|^2 - c, |Z|^2 Z - 2cZ)`` on grid values."""
    return {kl: hermite_eval(kl[0], kl[1], z, c) for kl in WICK_INDICES}


def wick_bundle(Z: SpectralField, c) -> WickBundle:
    grid = Z.grid
    if grid.N < 4 * grid.n + 2:
        raise ConfigurationError(f"N={grid.N} too small for cubic Wick powers at n={grid.n}")
    c = _cval(c)
    vals = wick_values(Z.to_grid(), c)
    fields = [SpectralField(grid, grid.from_grid(vals[kl])) for kl in WICK_INDICES]
    return WickBundle(*fields, c=c, values=vals)


def nonstationary_shift(Z_s: SpectralField, Z_t: SpectralField, dt: float, c, mu: float) -> WickBundle:
    """Wick bundle of ``Z(s,t) = Z_t - e^{(t-s)A} Z_s``."""
    if dt < 0:
        raise InputError("dt must be nonnegative")
    if Z_s.grid != Z_t.grid:
        raise InputError("fields live on different grids")
    lam = lambda_A(mu).values(Z_s.grid)
    shift = SpectralField(Z_s.grid, Z_t.coeffs - np.exp(-dt * lam) * Z_s.coeffs)
    return wick_bundle(shift, c)


def z_norm(bundle: WickBundle, t: float, alpha: float, part=None):
    """``max{||Z||, t^a ||Z^{2,0}||, t^a ||Z^{1,1}||, t^a ||Z^{2,1}||}`` in ``B^{-alpha}_{inf,inf}``."""
    from .dyadic import BesovParams, besov_norm

    bp = BesovParams(-alpha, math.inf, math.inf)
    w = t ** alpha
    norms = [besov_norm(bundle.z10, bp, part)]
    norms += [w * besov_norm(bundle[kl], bp, part) for kl in ((2, 0), (1, 1), (2, 1))]
    return np.maximum.reduce(norms)
