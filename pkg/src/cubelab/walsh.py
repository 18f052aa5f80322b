"""Exact XOR-correlation on (Z/2)^w via the Walsh-Hadamard transform.

The transform only adds and subtracts, so it is a ring homomorphism on
Z/2^64. Running it in wrapping uint64 arithmetic therefore yields every
output modulo 2^64; when the true output is known to lie in [0, 2^64) the
result is exact. Callers pass an upper bound on the true result and the
functions refuse if it cannot be represented.
"""

from __future__ import annotations

import numpy as np

_LIMIT = 1 << 64


def wht(values: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform, uint64 wrapping arithmetic."""
    a = np.array(values, dtype=np.uint64, copy=True)
    n = a.size
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    h = 1
    while h < n:
        v = a.reshape(-1, 2, h)
        x = v[:, 0, :].copy()
        y = v[:, 1, :]
        v[:, 0, :] += y
        v[:, 1, :] = x - y
        h <<= 1
    return a


def xor_correlate(f: np.ndarray, g: np.ndarray, bound: int) -> np.ndarray:
    """Return ``c[s] = sum_t f[t] * g[t ^ s]`` exactly, as int64/uint64.

    ``f`` and ``g`` are non-negative integer vectors of equal power-of-two
    length, and ``bound`` is an upper bound on every ``c[s]``.
    """
    n = f.size
    if g.size != n:
        raise ValueError("length mismatch")
    if bound < 0 or bound * n >= _LIMIT:
        raise OverflowError(f"correlation bound {bound} x {n} exceeds 64-bit exact range")
    with np.errstate(over="ignore"):
        prod = wht(f) * wht(g)
        out = wht(prod)
    log_n = n.bit_length() - 1
    out >>= np.uint64(log_n)
    if bound < (1 << 63):
        return out.astype(np.int64)
    return out


def subset_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``c[s] = |A ∩ (B + s)|`` for boolean membership vectors ``a``, ``b``."""
    bound = int(min(np.count_nonzero(a), np.count_nonzero(b)))
    return xor_correlate(a.astype(np.uint64), b.astype(np.uint64), bound)
