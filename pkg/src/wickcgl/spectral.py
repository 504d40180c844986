"""Band-limited fields on the unit torus.

Coefficients are stored in a ``(2n+1, 2n+1)`` array indexed by ``m + n``;
entries outside the Euclidean ball ``|m| <= n`` are structurally zero.
Leading axes are batch axes (replicas).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, InputError

SNAPSHOT_MAGIC = b"WCGL"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdQ")


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(x):
    """C-infinity monotone step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    a = _bump(x)
    b = _bump(1.0 - x)
    return a / (a + b)


def cutoff_profile(r):
    """Radial symbol of the smooth projector: 1 on [0, 1/2], 0 on [1, inf)."""
    return 1.0 - smooth_step((np.asarray(r, dtype=float) - 0.5) / 0.5)


@dataclass(frozen=True)
class PhysParams:
    mu: float = 1.0
    nu: complex = 1.0
    lam: complex = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if not complex(self.nu).real > 0:
            raise ConfigurationError(f"nu must have positive real part, got {self.nu}")
        object.__setattr__(self, "nu", complex(self.nu))
        object.__setattr__(self, "lam", complex(self.lam))


def fast_size(n: int) -> int:
    """Smallest even FFT-friendly collocation size with cubic dealiasing at band ``n``."""
    N = sfft.next_fast_len(4 * n + 2)
    while N % 2:
        N = sfft.next_fast_len(N + 1)
    return N


class Grid:
    """Mode ball ``|m| <= n`` with an ``N x N`` collocation grid."""

    def __init__(self, n: int, N: int | None = None, *, dealias: bool = True):
        n = int(n)
        if n < 1:
            raise ConfigurationError("cutoff n must be >= 1")
        if N is None:
            N = 4 * n + 4
        N = int(N)
        if N % 2:
            raise ConfigurationError(f"collocation size N={N} must be even")
        if dealias and N < 4 * n + 2:
            raise ConfigurationError(f"N={N} too small for cubic dealiasing at n={n} (need >= {4 * n + 2})")
        if N < 2 * n + 1:
            raise ConfigurationError(f"N={N} cannot represent modes up to {n}")
        self.n = n
        self.N = N

    def __repr__(self):
        return f"Grid(n={self.n}, N={self.N})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.n, self.N) == (other.n, other.N)

    def __hash__(self):
        return hash((self.n, self.N))

    @property
    def shape(self):
        return (2 * self.n + 1, 2 * self.n + 1)

    @cached_property
    def modes(self):
        k = np.arange(-self.n, self.n + 1)
        return np.meshgrid(k, k, indexing="ij")

    @cached_property
    def abs2(self):
        m1, m2 = self.modes
        return (m1 * m1 + m2 * m2).astype(float)

    @cached_property
    def absm(self):
        return np.sqrt(self.abs2)

    @cached_property
    def mask(self):
        return self.abs2 <= self.n * self.n

    @cached_property
    def _idx(self):
        return np.arange(-self.n, self.n + 1) % self.N

    @cached_property
    def points(self):
        x = np.arange(self.N) / self.N
        return np.meshgrid(x, x, indexing="ij")

    def zeros(self, batch=()):
        return SpectralField(self, np.zeros(tuple(batch) + self.shape, dtype=complex))

    def mode(self, m, coeff=1.0):
        """The field ``coeff * e_m``."""
        m1, m2 = int(m[0]), int(m[1])
        if m1 * m1 + m2 * m2 > self.n * self.n:
            raise InputError(f"mode {m} outside band {self.n}")
        f = self.zeros()
        f.coeffs[m1 + self.n, m2 + self.n] = coeff
        return f

    def random(self, rng: np.random.Generator, batch=(), decay: float = 0.0):
        """Random band-limited field with coefficients ~ (1+|m|)^(-decay)."""
        shape = tuple(batch) + self.shape
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        c *= (1.0 + self.absm) ** (-decay)
        return SpectralField(self, c * self.mask)

    # -- transforms on raw arrays -------------------------------------------

    def pad(self, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.shape[-2:] != self.shape:
            raise InputError(f"coefficient block {coeffs.shape[-2:]} does not match {self.shape}")
        full = np.zeros(coeffs.shape[:-2] + (self.N, self.N), dtype=complex)
        i = self._idx
        full[..., i[:, None], i[None, :]] = coeffs
        return full

    def to_grid(self, coeffs):
        """Collocation values; the first 1D pass only touches the occupied rows."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape[-2:] != self.shape:
            raise InputError(f"coefficient block {coeffs.shape[-2:]} does not match {self.shape}")
        i = self._idx
        rows = np.zeros(coeffs.shape[:-2] + (self.N, self.shape[1]), dtype=complex)
        rows[..., i, :] = coeffs
        rows = sfft.ifft(rows, axis=-2, norm="forward", overwrite_x=True)
        full = np.zeros(coeffs.shape[:-2] + (self.N, self.N), dtype=complex)
        full[..., i] = rows
        return sfft.ifft(full, axis=-1, norm="forward", overwrite_x=True)

    def from_grid(self, values):
        values = np.asarray(values)
        if values.shape[-2:] != (self.N, self.N):
            raise InputError(f"grid values {values.shape[-2:]} do not match N={self.N}")
        i = self._idx
        cols = sfft.fft(values, axis=-1, norm="forward")[..., i]
        return sfft.fft(cols, axis=-2, norm="forward", overwrite_x=True)[..., i, :] * self.mask


class SpectralField:
    """Coefficients of ``sum_m c_m e_m`` on a grid (optionally batched)."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: Grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape[-2:] != grid.shape:
            raise InputError(f"coefficient block {coeffs.shape[-2:]} does not match {grid.shape}")
        self.grid = grid
        self.coeffs = coeffs

    def __repr__(self):
        return f"SpectralField({self.grid!r}, batch={self.coeffs.shape[:-2]})"

    def copy(self):
        return SpectralField(self.grid, self.coeffs.copy())

    def _other(self, other):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise InputError("fields live on different grids")
            return other.coeffs
        return other

    def __add__(self, other):
        if isinstance(other, SpectralField):
            return SpectralField(self.grid, self.coeffs + self._other(other))
        return SpectralField(self.grid, self.coeffs + self._const(other))

    __radd__ = __add__

    def _const(self, c):
        out = np.zeros(self.grid.shape, dtype=complex)
        out[self.grid.n, self.grid.n] = c
        return out

    def __sub__(self, other):
        return self + (-1) * other

    def __rmul__(self, s):
        return SpectralField(self.grid, s * self.coeffs)

    def __mul__(self, s):
        if isinstance(s, SpectralField):
            return product(self, s)
        return SpectralField(self.grid, self.coeffs * s)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def conj(self):
        """Pointwise complex conjugate: coefficient m becomes conj(c_{-m})."""
        return SpectralField(self.grid, np.conj(self.coeffs[..., ::-1, ::-1]))

    def to_grid(self):
        return self.grid.to_grid(self.coeffs)

    @classmethod
    def from_grid(cls, values, grid: Grid):
        return cls(grid, grid.from_grid(values))

    def l2(self):
        return np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=(-2, -1)))

    def rebin(self, grid: Grid):
        """Embed into (or truncate onto) another band limit."""
        out = np.zeros(self.coeffs.shape[:-2] + grid.shape, dtype=complex)
        k = min(self.grid.n, grid.n)
        a, b = self.grid.n, grid.n
        out[..., b - k:b + k + 1, b - k:b + k + 1] = self.coeffs[..., a - k:a + k + 1, a - k:a + k + 1]
        return SpectralField(grid, out * grid.mask)


def to_grid(f: SpectralField):
    return f.to_grid()


def from_grid(values, grid: Grid) -> SpectralField:
    return SpectralField.from_grid(values, grid)


def cutoff_symbol(n: int, m) -> np.ndarray:
    """Symbol of the smooth projector at mode(s) ``m`` (a pair, array of pairs, or radii)."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    m = np.asarray(m, dtype=float)
    r = np.sqrt(np.sum(m * m, axis=-1)) if m.ndim >= 1 and m.shape[-1] == 2 else np.abs(m)
    out = cutoff_profile(r / n)
    return out[()] if np.ndim(out) == 0 else out


def cutoff_array(grid: Grid, n: int | None = None):
    """``cutoff_symbol(n, m)`` over the grid's mode array (default ``n = grid.n``)."""
    n = grid.n if n is None else n
    return cutoff_profile(grid.absm / n) * grid.mask


def project_pi(f: SpectralField, n: int | None = None) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * cutoff_array(f.grid, n))


class LinearSymbol:
    """Per-mode eigenvalue of ``-A`` (``kind='A'``) or of ``-(i+mu)Laplacian`` (``kind='Delta'``)."""

    def __init__(self, mu: float, kind: str = "A"):
        if kind not in ("A", "Delta"):
            raise ConfigurationError(f"unknown symbol kind {kind!r}")
        self.mu = float(mu)
        self.kind = kind

    def values(self, grid: Grid):
        lam = 4 * np.pi ** 2 * (1j + self.mu) * grid.abs2
        return lam + 1.0 if self.kind == "A" else lam


def lambda_A(mu):
    return LinearSymbol(mu, "A")


def lambda_Delta(mu):
    return LinearSymbol(mu, "Delta")


def semigroup_apply(f: SpectralField, t: float, symbol: LinearSymbol) -> SpectralField:
    if t < 0:
        raise InputError(f"negative time {t}")
    return SpectralField(f.grid, f.coeffs * np.exp(-t * symbol.values(f.grid)) * f.grid.mask)


def phi1(w):
    """``(e^w - 1)/w`` with a series fallback near 0."""
    w = np.asarray(w, dtype=complex)
    small = np.abs(w) < 1e-6
    safe = np.where(small, 1.0, w)
    out = np.where(small, 1 + w / 2 + w * w / 6, np.expm1(safe) / safe)
    return out


def _require_dealias(grid: Grid):
    if grid.N < 4 * grid.n + 2:
        raise ConfigurationError(f"N={grid.N} too small for cubic dealiasing at n={grid.n}")


def product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Truncated product ``fg`` (exact when N >= 3n+1)."""
    if f.grid != g.grid:
        raise InputError("fields live on different grids")
    grid = f.grid
    if grid.N < 3 * grid.n + 1:
        raise ConfigurationError(f"N={grid.N} too small for a dealiased product at n={grid.n}")
    return SpectralField(grid, grid.from_grid(f.to_grid() * g.to_grid()))


def dealiased_cubic(u: SpectralField) -> SpectralField:
    """Truncation to ``|m| <= n`` of ``|u|^2 u``."""
    _require_dealias(u.grid)
    v = u.to_grid()
    return SpectralField(u.grid, u.grid.from_grid((v * v.conj()).real * v))


def gradient(f: SpectralField):
    """Spectral partial derivatives (d/dx1, d/dx2)."""
    m1, m2 = f.grid.modes
    return (SpectralField(f.grid, 2j * np.pi * m1 * f.coeffs),
            SpectralField(f.grid, 2j * np.pi * m2 * f.coeffs))


def pairing(f: SpectralField, g: SpectralField):
    """Non-conjugating pairing ``<f, g> = integral of f g`` on the unit torus."""
    return np.sum(f.coeffs * g.coeffs[..., ::-1, ::-1], axis=(-2, -1))


# -- snapshots ---------------------------------------------------------------


def snapshot_bytes(f: SpectralField, t: float, seed: int) -> bytes:
    if f.coeffs.ndim != 2:
        raise InputError("snapshots hold a single field")
    g = f.grid
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n, g.N, float(t), int(seed) & (2 ** 64 - 1))
    return head + np.ascontiguousarray(f.coeffs, dtype="<c8").tobytes()


def write_snapshot(path, f: SpectralField, t: float, seed: int) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(f, t, seed))


def read_snapshot(path):
    """Returns ``(field, t, seed)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise InputError(f"{path}: truncated snapshot header")
    magic, version, n, N, t, seed = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise InputError(f"{path}: unsupported snapshot version {version}")
    grid = Grid(n, N, dealias=False)
    body = np.frombuffer(data, dtype="<c8", offset=_HEADER.size)
    if body.size != (2 * n + 1) ** 2:
        raise InputError(f"{path}: expected {(2 * n + 1) ** 2} coefficients, found {body.size}")
    return SpectralField(grid, body.reshape(grid.shape).astype(complex)), t, seed


def quantize(coeffs):
    """Round coefficients through complex64 (the snapshot precision)."""
    return np.asarray(coeffs).astype(np.complex64).astype(complex)
