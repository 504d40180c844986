"""Counter-based Gaussian streams.

Every draw is a pure function of ``(seed, replica, step, mode, stream)``, so a
trajectory can be reproduced, resumed, or split across workers without any
generator state.  The block cipher is Philox4x32-10; one counter yields four
32-bit words, which become two 53-bit uniforms and, through Box-Muller (cosine
component first), one standard complex normal.
"""
from __future__ import annotations

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)

# stream tags (fourth counter word)
STREAM_NOISE = 0
STREAM_INIT = 1
STREAM_AUX = 2

_MODE_OFFSET = 1 << 15


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function, vectorised over the leading axes.

    ``counter`` has shape ``(..., 4)`` and ``key`` shape ``(2,)`` (or
    broadcastable); entries are taken modulo 2**32.  Returns uint32 words with
    the same shape as ``counter``.
    """
    c = np.asarray(counter, dtype=np.uint64) & _MASK
    k = np.asarray(key, dtype=np.uint64) & _MASK
    c0, c1, c2, c3 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    k0, k1 = k[..., 0], k[..., 1]
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def seed_key(seed: int) -> np.ndarray:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)


def mode_code(m1, m2) -> np.ndarray:
    """Pack a lattice mode into one 32-bit counter word (|m_i| < 2**15)."""
    m1 = np.asarray(m1, dtype=np.int64)
    m2 = np.asarray(m2, dtype=np.int64)
    return ((m1 + _MODE_OFFSET) << 16) | (m2 + _MODE_OFFSET)


def _uniform53(hi, lo):
    hi = hi.astype(np.uint64) >> np.uint64(5)
    lo = lo.astype(np.uint64) >> np.uint64(6)
    return (hi.astype(np.float64) * 67108864.0 + lo.astype(np.float64)) / 9007199254740992.0


def complex_normal_reference(seed: int, replica, step, code, stream: int = STREAM_NOISE):
    """Pure-numpy form of :func:`complex_normal` (slow; used to cross-check the kernel)."""
    replica, step, code = np.broadcast_arrays(
        np.asarray(replica, dtype=np.int64),
        np.asarray(step, dtype=np.int64),
        np.asarray(code, dtype=np.int64),
    )
    ctr = np.empty(replica.shape + (4,), dtype=np.uint64)
    ctr[..., 0] = replica
    ctr[..., 1] = step
    ctr[..., 2] = code
    ctr[..., 3] = stream
    words = philox4x32(ctr, seed_key(seed))
    u1 = 1.0 - _uniform53(words[..., 0], words[..., 1])  # (0, 1]
    u2 = _uniform53(words[..., 2], words[..., 3])
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return (rad * np.cos(ang) + 1j * rad * np.sin(ang)) * np.sqrt(0.5)


@numba.njit(cache=True)
def _mulhilo(a, b):
    p = a * b
    return p >> _SHIFT, p & _MASK


@numba.njit(cache=True)
def _normal_kernel(k0, k1, rep, step, code, stream, out):
    mask = _MASK
    for i in range(rep.size):
        c0 = np.uint64(rep[i]) & mask
        c1 = np.uint64(step[i]) & mask
        c2 = np.uint64(code[i]) & mask
        c3 = np.uint64(stream) & mask
        a0 = np.uint64(k0)
        a1 = np.uint64(k1)
        for r in range(10):
            if r:
                a0 = (a0 + _W0) & mask
                a1 = (a1 + _W1) & mask
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ a0, lo1, hi0 ^ c3 ^ a1, lo0
        u1 = 1.0 - (np.float64(c0 >> _S5) * 67108864.0 + np.float64(c1 >> _S6)) / 9007199254740992.0
        u2 = (np.float64(c2 >> _S5) * 67108864.0 + np.float64(c3 >> _S6)) / 9007199254740992.0
        rad = np.sqrt(-2.0 * np.log(u1)) * np.sqrt(0.5)
        ang = 2.0 * np.pi * u2
        out[i] = complex(rad * np.cos(ang), rad * np.sin(ang))


def complex_normal(seed: int, replica, step, code, stream: int = STREAM_NOISE):
    """Standard isotropic complex normals, E|G|^2 = 1 and E[G^2] = 0.

    ``replica``, ``step`` and ``code`` broadcast against each other; the
    result has the broadcast shape.
    """
    replica, step, code = np.broadcast_arrays(
        np.asarray(replica, dtype=np.int64),
        np.asarray(step, dtype=np.int64),
        np.asarray(code, dtype=np.int64),
    )
    key = seed_key(seed)
    out = np.empty(replica.size, dtype=np.complex128)
    _normal_kernel(int(key[0]), int(key[1]), np.ascontiguousarray(replica).ravel(),
                   np.ascontiguousarray(step).ravel(), np.ascontiguousarray(code).ravel(),
                   int(stream), out)
    return out.reshape(replica.shape)
