"""Walsh-Hadamard butterflies and bit-reversal helpers shared by the encoder,
decoder, estimator and simulator."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    if not is_power_of_two(n):
        raise ValueError(f"N must be a power of 2, got {n}")
    return int(n).bit_length() - 1


@lru_cache(maxsize=64)
def _bitrev(n: int) -> np.ndarray:
    k = log2_exact(n)
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(k):
        rev |= ((idx >> b) & 1) << (k - 1 - b)
    rev.setflags(write=False)
    return rev


def bit_reverse_permutation(n: int) -> np.ndarray:
    """Index array ``r`` with ``r[i]`` the k-bit reversal of ``i`` (an involution)."""
    return _bitrev(n)


@dataclass
class OpCount:
    """Tally of block additions/subtractions performed by a butterfly."""

    block_ops: int = 0


def fwht(x: np.ndarray, ops: OpCount | None = None) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along axis 0.

    Returns ``H @ x`` for the +/-1 Sylvester matrix ``H`` of order ``len(x)``
    without forming ``H``. Stage ``j`` combines rows ``m`` and ``m + 2**j``
    (``m`` with bit ``j`` clear) into their sum and difference.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    k = log2_exact(n)
    rest = x.shape[1:]
    # two preallocated buffers; fresh temporaries per stage cost page faults on large inputs
    y = x.copy()
    z = np.empty_like(y)
    for j in range(k):
        h = 1 << j
        v = y.reshape((n // (2 * h), 2, h) + rest)
        w = z.reshape(v.shape)
        np.add(v[:, 0], v[:, 1], out=w[:, 0])
        np.subtract(v[:, 0], v[:, 1], out=w[:, 1])
        y, z = z, y
        if ops is not None:
            ops.block_ops += n
    return y
