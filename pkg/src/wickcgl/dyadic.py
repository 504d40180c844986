"""Littlewood-Paley blocks, Besov norms and Bony's decomposition on the torus."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .spectral import Grid, SpectralField, smooth_step


def psi(r):
    """1 on [0, 1], 0 on [4/3, inf), smooth and monotone in between."""
    return 1.0 - smooth_step(3.0 * (np.asarray(r, dtype=float) - 1.0))


def chi_minus1(r):
    return psi(r)


def chi(r):
    """Annulus profile ``psi(r/2) - psi(r)``, supported in [1, 8/3]."""
    r = np.asarray(r, dtype=float)
    return psi(r / 2.0) - psi(r)


@dataclass(frozen=True)
class DyadicPartition:
    kmax: int

    def __post_init__(self):
        if self.kmax < 0:
            raise ConfigurationError("kmax must be >= 0")

    @property
    def blocks(self):
        return range(-1, self.kmax + 1)

    @property
    def band(self) -> float:
        """Largest radius on which the blocks sum to one."""
        return 2.0 ** (self.kmax + 1)

    def weight(self, k: int, r):
        if k == -1:
            return chi_minus1(r)
        if not 0 <= k <= self.kmax:
            raise InputError(f"block index {k} outside [-1, {self.kmax}]")
        return chi(np.asarray(r, dtype=float) / 2.0 ** k)

    def multipliers(self, grid: Grid) -> np.ndarray:
        return np.stack([self.weight(k, grid.absm) * grid.mask for k in self.blocks])


def build_partition(kmax: int) -> DyadicPartition:
    return DyadicPartition(int(kmax))


def partition_for(n: int) -> DyadicPartition:
    """Smallest partition resolving band limit ``n``."""
    return DyadicPartition(max(0, math.ceil(math.log2(max(n, 1))) - 1))


@dataclass(frozen=True)
class BesovParams:
    alpha: float
    p: float = math.inf
    q: float = math.inf

    def __post_init__(self):
        if not (self.p >= 1 and self.q >= 1):
            raise ConfigurationError(f"need p, q >= 1, got p={self.p}, q={self.q}")


def _check_band(f: SpectralField, part: DyadicPartition):
    if f.grid.n > part.band:
        raise ConfigurationError(f"band {f.grid.n} exceeds partition range {part.band}")


def lp_block(f: SpectralField, k: int, part: DyadicPartition) -> SpectralField:
    _check_band(f, part)
    return SpectralField(f.grid, f.coeffs * part.weight(k, f.grid.absm))


def collocation_size(n: int, p: float, N: int | None = None) -> int:
    """Collocation size for L^p norms of band-``n`` fields; exact for even integer p."""
    need = 2 * n + 2 if math.isinf(p) else int(math.ceil(p)) * n + 2
    need += need % 2
    if N is None:
        return max(need, 4 * n + 4)
    if float(p).is_integer() and p % 2 == 0 and N <= p * n:
        raise ConfigurationError(f"N={N} under-resolves L^{p} of band {n} (need N > {p * n})")
    if N < 2 * n + 1:
        raise ConfigurationError(f"N={N} cannot represent band {n}")
    return N


def lp_norm_values(values, p: float):
    """L^p norm of grid values on the unit torus (mean quadrature); reduces the last two axes."""
    a = np.abs(values)
    if math.isinf(p):
        return a.max(axis=(-2, -1))
    return np.mean(a ** p, axis=(-2, -1)) ** (1.0 / p)


def lp_norm(f: SpectralField, p: float, N: int | None = None):
    N = collocation_size(f.grid.n, p, N)
    g = Grid(f.grid.n, N, dealias=False)
    return lp_norm_values(g.to_grid(f.coeffs), p)


def lq_sum(seq, q: float, axis: int = 0):
    """l^q norm along ``axis``; finite q sums in descending magnitude order."""
    seq = np.abs(np.asarray(seq, dtype=float))
    if math.isinf(q):
        return seq.max(axis=axis)
    s = -np.sort(-seq ** q, axis=axis)
    total = np.zeros(np.delete(np.array(s.shape), axis)) if s.ndim > 1 else 0.0
    for i in range(s.shape[axis]):
        total = total + np.take(s, i, axis=axis)
    return total ** (1.0 / q)


def block_norms(f: SpectralField, p: float, part: DyadicPartition, N: int | None = None,
                max_elements: int = 1 << 24):
    """``||delta_k f||_{L^p}`` for k = -1..kmax, stacked on axis 0."""
    _check_band(f, part)
    N = collocation_size(f.grid.n, p, N)
    g = Grid(f.grid.n, N, dealias=False)
    mult = part.multipliers(f.grid)
    batch = f.coeffs.shape[:-2]
    flat = f.coeffs.reshape((-1,) + f.grid.shape)
    chunk = max(1, max_elements // (mult.shape[0] * N * N))
    out = np.empty((mult.shape[0], flat.shape[0]))
    for s in range(0, flat.shape[0], chunk):
        block = flat[None, s:s + chunk] * mult[:, None]
        out[:, s:s + chunk] = lp_norm_values(g.to_grid(block), p)
    return out.reshape((mult.shape[0],) + batch)


def besov_weights(alpha: float, part: DyadicPartition):
    return np.array([2.0 ** (alpha * max(k, 0)) for k in part.blocks])


def besov_norm(f: SpectralField, params: BesovParams, part: DyadicPartition | None = None,
               N: int | None = None):
    part = partition_for(f.grid.n) if part is None else part
    norms = block_norms(f, params.p, part, N)
    w = besov_weights(params.alpha, part).reshape((-1,) + (1,) * (norms.ndim - 1))
    return lq_sum(w * norms, params.q, axis=0)


def besov_from_blocks(norms, alpha: float, q: float, part: DyadicPartition):
    w = besov_weights(alpha, part).reshape((-1,) + (1,) * (np.ndim(norms) - 1))
    return lq_sum(w * np.asarray(norms), q, axis=0)


def bony_decompose(f: SpectralField, g: SpectralField, part: DyadicPartition | None = None):
    """``(f < g, f o g, f > g)`` as exact fields of band ``2n``; their sum is ``fg``."""
    if f.grid != g.grid:
        raise InputError("fields live on different grids")
    if f.coeffs.shape != g.coeffs.shape:
        raise InputError("batch shapes differ")
    n = f.grid.n
    part = partition_for(n) if part is None else part
    _check_band(f, part)
    big = Grid(2 * n)
    mult = part.multipliers(f.grid)
    fb = big.to_grid(SpectralField(f.grid, f.coeffs[None] * _expand(mult, f)).rebin(big).coeffs)
    gb = big.to_grid(SpectralField(g.grid, g.coeffs[None] * _expand(mult, g)).rebin(big).coeffs)
    nb = fb.shape[0]
    fcum = np.cumsum(fb, axis=0)
    gcum = np.cumsum(gb, axis=0)
    para_fg = np.zeros(fb.shape[1:], dtype=complex)
    para_gf = np.zeros(fb.shape[1:], dtype=complex)
    reso = np.zeros(fb.shape[1:], dtype=complex)
    for i in range(nb):
        if i >= 2:
            para_fg += fcum[i - 2] * gb[i]
            para_gf += gcum[i - 2] * fb[i]
        lo, hi = max(i - 1, 0), min(i + 1, nb - 1)
        reso += fb[i] * gb[lo:hi + 1].sum(axis=0)
    return tuple(SpectralField(big, big.from_grid(v)) for v in (para_fg, reso, para_gf))


def _expand(mult, f):
    return mult.reshape((mult.shape[0],) + (1,) * (f.coeffs.ndim - 2) + mult.shape[1:])
