"""Polarizing kernels and polarized erasure probabilities.

A kernel ``K`` maps inputs ``u`` to worker inputs ``v = K u``. It is
*polarizing* when sequential recovery of ``f(u_1), ..., f(u_p)`` finishes at
the order statistics of the worker run times, slowest first. For the
recursive 2x2 construction the erasure probability of each transformed input
follows from repeatedly applying ``F+(e) = 1 - (1 - e)**2`` (both branches
needed) and ``F-(e) = e**2`` (either branch suffices).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._hadamard import log2_exact

#: Relative threshold below which an entry or determinant counts as zero.
RTOL = 1e-12
MAX_KERNEL_SIZE = 8


@dataclass(frozen=True)
class Kernel:
    entries: np.ndarray

    def __post_init__(self):
        k = np.array(self.entries, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] < 2:
            raise ValueError(f"kernel must be square with size >= 2, got shape {k.shape}")
        k.setflags(write=False)
        object.__setattr__(self, "entries", k)

    @property
    def p(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ErasureProfile:
    """Erasure probability of each transformed input, in encoder input order."""

    probs: np.ndarray
    epsilon: float

    @property
    def N(self) -> int:
        return len(self.probs)


def _as_kernel(K) -> Kernel:
    return K if isinstance(K, Kernel) else Kernel(np.asarray(K))


def _scale(m: np.ndarray) -> float:
    s = float(np.max(np.abs(m)))
    return s if s > 0 else 1.0


def _nonzero(v: float, scale: float) -> bool:
    return abs(v) > RTOL * scale


def _invertible(sub: np.ndarray, scale: float) -> bool:
    q = sub.shape[0]
    return abs(np.linalg.det(sub)) > RTOL * scale**q


def is_polarizing_2x2(K) -> bool:
    """Both second-column entries nonzero and ``K`` invertible."""
    k = _as_kernel(K).entries
    if k.shape != (2, 2):
        raise ValueError(f"expected a 2x2 kernel, got {k.shape}")
    scale = _scale(k)
    return bool(_nonzero(k[0, 1], scale) and _nonzero(k[1, 1], scale) and _invertible(k, scale))


def is_polarizing_pxp(K) -> bool:
    """General size-p test.

    ``K`` must be invertible and, for every ``j = 1..p-1``, each square
    submatrix formed by ``p - j`` rows of ``K`` with its first ``j`` columns
    removed must be invertible.
    """
    k = _as_kernel(K).entries
    p = k.shape[0]
    if p > MAX_KERNEL_SIZE:
        raise ValueError(f"kernel size {p} exceeds the supported maximum {MAX_KERNEL_SIZE}")
    scale = _scale(k)
    if not _invertible(k, scale):
        return False
    for j in range(1, p):
        tail = k[:, j:]
        for rows in combinations(range(p), p - j):
            if not _invertible(tail[list(rows)], scale):
                return False
    return True


def kernel_runtime_map(K, times) -> np.ndarray:
    """Time at which each input of a polarizing kernel becomes recoverable.

    Input ``i`` is available at the ``i``-th largest worker time.
    """
    kern = _as_kernel(K)
    t = np.asarray(times, dtype=np.float64)
    if t.shape != (kern.p,):
        raise ValueError(f"expected {kern.p} run times, got shape {t.shape}")
    if not is_polarizing_pxp(kern):
        raise ValueError("kernel is not polarizing")
    return np.sort(t)[::-1].copy()


def f_plus(e):
    return 1.0 - (1.0 - e) ** 2


def f_minus(e):
    return e**2


def erasure_profile(epsilon: float, N: int) -> ErasureProfile:
    """Polarized erasure probabilities of the ``N`` transformed inputs.

    Index ``i`` matches the encoder's input position: bit ``b`` of ``i``
    selects the upper (``F+``) or lower (``F-``) branch of butterfly stage
    ``b``, with stage ``log2(N) - 1`` (closest to the workers) applied first.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    k = log2_exact(N)
    p = np.array([float(epsilon)])
    for _ in range(k):
        nxt = np.empty(2 * len(p))
        nxt[0::2] = f_plus(p)
        nxt[1::2] = f_minus(p)
        p = nxt
    return ErasureProfile(probs=p, epsilon=float(epsilon))


def select_frozen(profile: ErasureProfile, s: int) -> tuple[int, ...]:
    """Indices of the ``N - s`` least reliable inputs, sorted ascending.

    Ties go to the lower index (it is frozen first).
    """
    N = profile.N
    if not 1 <= s <= N:
        raise ValueError(f"s must satisfy 1 <= s <= N={N}, got {s}")
    # stable sort on -prob keeps lower indices first among equal probabilities
    order = np.argsort(-profile.probs, kind="stable")
    return tuple(sorted(int(i) for i in order[: N - s]))
