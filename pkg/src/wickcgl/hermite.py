"""Complex Hermite polynomials and desk-scale complex multiple Ito-Wiener integrals.

``H_{k,l}(z, c)`` is the Wick power of ``z^k conj(z)^l`` for an isotropic
complex Gaussian with ``E|z|^2 = c``.  The measure-space side is modelled by a
finite family of disjoint cells with positive masses; kernels are simple
functions on products of cells.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .errors import ConfigurationError, InputError

DEFAULT_MAX_DEGREE = 8


@dataclass(frozen=True)
class WickIndex:
    k: int
    l: int

    def __post_init__(self):
        if self.k < 0 or self.l < 0:
            raise InputError(f"negative Wick index ({self.k}, {self.l})")

    @property
    def degree(self) -> int:
        return self.k + self.l


def _check_degree(k: int, l: int, max_degree: int) -> None:
    if k < 0 or l < 0:
        raise InputError(f"negative Wick index ({k}, {l})")
    if k + l > max_degree:
        raise ConfigurationError(f"degree {k + l} exceeds configured maximum {max_degree}")


def hermite_coefficients(k: int, l: int) -> list[int]:
    """Integer coefficients ``m! C(k,m) C(l,m)`` for m = 0..min(k, l)."""
    return [factorial(m) * comb(k, m) * comb(l, m) for m in range(min(k, l) + 1)]


def hermite_eval(k: int, l: int, z, c, max_degree: int = DEFAULT_MAX_DEGREE):
    """Evaluate ``H_{k,l}(z, c)``; ``z`` may be an array, ``c`` a scalar or broadcastable array.

    Uses the explicit finite sum, rearranged as
    ``z^{k-s} conj(z)^{l-s} P(|z|^2)`` with ``s = min(k, l)`` and ``P``
    evaluated by Horner's rule in ``|z|^2``.
    """
    _check_degree(k, l, max_degree)
    z = np.asarray(z, dtype=complex)
    c = np.asarray(c, dtype=float)
    s = min(k, l)
    coef = hermite_coefficients(k, l)
    w = (z * z.conj()).real
    poly = np.zeros(np.broadcast(w, c).shape) + coef[0]
    for m in range(1, s + 1):
        poly = poly * w + coef[m] * (-c) ** m
    out = poly * z ** (k - s) * z.conj() ** (l - s)
    return out[()] if out.ndim == 0 else out


def hermite_dz(k: int, l: int, z, c, max_degree: int = DEFAULT_MAX_DEGREE):
    """Wirtinger derivative in z: ``k H_{k-1,l}``."""
    _check_degree(k, l, max_degree)
    if k == 0:
        return np.zeros_like(np.asarray(z, dtype=complex))[()]
    return k * hermite_eval(k - 1, l, z, c, max_degree)


def hermite_dzbar(k: int, l: int, z, c, max_degree: int = DEFAULT_MAX_DEGREE):
    """Wirtinger derivative in conj(z): ``l H_{k,l-1}``."""
    _check_degree(k, l, max_degree)
    if l == 0:
        return np.zeros_like(np.asarray(z, dtype=complex))[()]
    return l * hermite_eval(k, l - 1, z, c, max_degree)


def isotropic_normal(rng: np.random.Generator, variance, size=None):
    """Isotropic complex normal with ``E|G|^2 = variance`` and ``E[G^2] = 0``."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    g = rng.standard_normal((2,) + shape)
    return (g[0] + 1j * g[1]) * np.sqrt(np.asarray(variance) / 2.0)


# ---------------------------------------------------------------------------
# Multiple integrals over a finite cell system


@dataclass(frozen=True)
class CellSystem:
    """Disjoint cells ``E_i`` with masses ``m(E_i) > 0``."""

    cells: tuple[tuple[object, float], ...]

    def __post_init__(self):
        ids = [c for c, _ in self.cells]
        if len(set(ids)) != len(ids):
            raise InputError("cell identifiers must be distinct")
        for cid, mass in self.cells:
            if not mass > 0:
                raise InputError(f"cell {cid!r} has non-positive mass {mass}")

    @classmethod
    def from_masses(cls, masses) -> "CellSystem":
        return cls(tuple((i, float(m)) for i, m in enumerate(masses)))

    @property
    def ids(self) -> list:
        return [c for c, _ in self.cells]

    def mass(self, cid) -> float:
        return self._masses[cid]

    @property
    def _masses(self) -> dict:
        return dict(self.cells)


@dataclass
class SimpleKernel:
    """Simple function on ``E^k x E^l``: holomorphic slots first, then antiholomorphic.

    Coefficients live on tuples of ``k + l`` cell identifiers; any tuple with a
    repeated identifier must carry a zero coefficient.
    """

    order: WickIndex
    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.order.degree
        clean = {}
        for key, val in self.coefficients.items():
            key = tuple(key)
            if len(key) != n:
                raise InputError(f"index tuple {key} has length {len(key)}, expected {n}")
            if val != 0:
                if len(set(key)) != len(key):
                    raise InputError(f"nonzero coefficient on repeated cell tuple {key}")
                clean[key] = complex(val)
        self.coefficients = clean

    def norm2(self, cells: CellSystem) -> float:
        """Squared ``L^2_{k,l}`` norm."""
        masses = cells._masses
        total = 0.0
        for key, val in self.coefficients.items():
            total += abs(val) ** 2 * float(np.prod([masses[i] for i in key]))
        return total

    def conj(self) -> "SimpleKernel":
        """Complex conjugate kernel, with holomorphic and antiholomorphic slots swapped."""
        k, l = self.order.k, self.order.l
        coeffs = {key[k:] + key[:k]: np.conj(v) for key, v in self.coefficients.items()}
        return SimpleKernel(WickIndex(l, k), coeffs)


def sample_cells(cells: CellSystem, rng: np.random.Generator, size=None) -> dict:
    """Draw the Gaussian measure ``M(E_i)`` for every cell."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    out = {}
    for cid, mass in cells.cells:
        g = rng.standard_normal((2,) + shape)
        out[cid] = (g[0] + 1j * g[1]) * np.sqrt(mass / 2.0)
    return out


def chaos_integral(f: SimpleKernel, draws: dict):
    """Evaluate the multiple integral of ``f`` on given cell draws."""
    k = f.order.k
    total = 0.0
    for key, val in f.coefficients.items():
        term = val
        for pos, cid in enumerate(key):
            if cid not in draws:
                raise InputError(f"unknown cell identifier {cid!r}")
            term = term * (draws[cid] if pos < k else np.conj(draws[cid]))
        total = total + term
    return total


def chaos_integral_sample(f: SimpleKernel, cells: CellSystem, rng: np.random.Generator, size=None):
    """Sample the multiple integral of a simple kernel (one value per draw)."""
    known = set(cells.ids)
    for key in f.coefficients:
        for cid in key:
            if cid not in known:
                raise InputError(f"unknown cell identifier {cid!r}")
    return chaos_integral(f, sample_cells(cells, rng, size))


def _validate_pairing(f: SimpleKernel, g: SimpleKernel, gamma) -> list[tuple[int, int]]:
    k1, l1 = f.order.k, f.order.l
    k2, l2 = g.order.k, g.order.l
    pairs = [(int(i), int(j)) for i, j in gamma]
    holo = [i for i, _ in pairs]
    anti = [j for _, j in pairs]
    if len(set(holo)) != len(holo) or len(set(anti)) != len(anti):
        raise InputError("pairing repeats a slot")
    for i, j in pairs:
        f_to_g = 1 <= i <= k1 and l1 + 1 <= j <= l1 + l2
        g_to_f = k1 + 1 <= i <= k1 + k2 and 1 <= j <= l1
        if not (f_to_g or g_to_f):
            raise InputError(f"pair {(i, j)} does not join a holomorphic slot of one kernel "
                             "to an antiholomorphic slot of the other")
    return pairs


def contract(f: SimpleKernel, g: SimpleKernel, gamma, cells: CellSystem) -> SimpleKernel:
    """Contraction ``f (x)_gamma g`` on the cell system.

    Slots are numbered 1-based as in the product formula: holomorphic slots
    ``t_1..t_{k1+k2}`` (those of ``f`` first) and antiholomorphic slots
    ``s_1..s_{l1+l2}``.  A pair ``(i, j)`` identifies ``t_i = s_j`` and
    integrates it against the cell masses.  Output coefficients on repeated
    cell tuples are dropped: on an atomless space the diagonals carry no mass.
    """
    pairs = _validate_pairing(f, g, gamma)
    k1, l1 = f.order.k, f.order.l
    k2, l2 = g.order.k, g.order.l
    masses = cells._masses
    paired_t = {i for i, _ in pairs}
    paired_s = {j for _, j in pairs}
    free_t = [i for i in range(1, k1 + k2 + 1) if i not in paired_t]
    free_s = [j for j in range(1, l1 + l2 + 1) if j not in paired_s]
    out: dict = {}
    for fkey, fval in f.coefficients.items():
        for gkey, gval in g.coefficients.items():
            t = list(fkey[:k1]) + list(gkey[:k2])
            s = list(fkey[k1:]) + list(gkey[k2:])
            weight = fval * gval
            ok = True
            for i, j in pairs:
                if t[i - 1] != s[j - 1]:
                    ok = False
                    break
                weight *= masses[t[i - 1]]
            if not ok:
                continue
            key = tuple(t[i - 1] for i in free_t) + tuple(s[j - 1] for j in free_s)
            if len(set(key)) != len(key):
                continue
            out[key] = out.get(key, 0.0) + weight
    r = len(pairs)
    return SimpleKernel(WickIndex(k1 + k2 - r, l1 + l2 - r), out)


def pairings(k1: int, l1: int, k2: int, l2: int, r1: int, r2: int):
    """Enumerate the admissible pairings with ``r1`` f-to-g and ``r2`` g-to-f contractions."""
    for ti in itertools.combinations(range(1, k1 + 1), r1):
        for sj in itertools.permutations(range(l1 + 1, l1 + l2 + 1), r1):
            first = list(zip(ti, sj))
            for ti2 in itertools.combinations(range(k1 + 1, k1 + k2 + 1), r2):
                for sj2 in itertools.permutations(range(1, l1 + 1), r2):
                    yield first + list(zip(ti2, sj2))


def tensor_power(f: dict, k: int, l: int) -> SimpleKernel:
    """Off-diagonal part of ``f^{(x)(k+l)}`` for a one-variable simple function ``f``.

    The antiholomorphic slots carry ``f`` itself (not its conjugate), matching
    the identity ``J_{k,l}(f^{(x)(k+l)}) = H_{k,l}(J_{1,0}(f), ||f||^2)`` for
    real-valued ``f``.
    """
    ids = list(f)
    coeffs = {}
    for key in itertools.permutations(ids, k + l):
        coeffs[key] = np.prod([f[i] for i in key])
    return SimpleKernel(WickIndex(k, l), coeffs)
