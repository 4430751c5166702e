"""Anytime estimation from any nonempty set of finished workers.

With ``z_w`` the ``w``-th row of ``Z`` the estimate of data block ``k`` is
``(1/|S|) sum_{w in S} z_w[k] * y_w`` where ``y_w`` is worker ``w``'s output.
Because ``Z^T Z = N I`` for the +/-1 Hadamard, the estimate is unbiased over
uniformly random sets ``S`` of any fixed size, and it coincides with a
subsampled randomized Hadamard transform (SRHT) applied to the zero-padded
data products.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from ._hadamard import bit_reverse_permutation, fwht, log2_exact
from .decoder import OutputSet
from .polarcode import CodeConfig, materialize_Z


@dataclass
class AnytimeEstimate:
    value: np.ndarray
    m: int
    config_ref: str


def anytime_estimate(out: OutputSet, config: CodeConfig) -> AnytimeEstimate:
    """Unbiased estimate of ``A x`` in ``O(N log N)`` via one fast transform."""
    if not out.present:
        raise ValueError("the anytime estimate needs at least one finished worker")
    N = config.N
    rev = bit_reverse_permutation(N)
    present = sorted(out.present)
    first = np.asarray(out.outputs[present[0]], dtype=np.float64)
    y = np.zeros((N,) + first.shape)
    for w in present:
        y[rev[w]] = out.outputs[w]
    t = fwht(y)
    pos = list(config.data_positions)
    sgn = config.signs[pos].reshape((-1,) + (1,) * first.ndim)
    est = sgn * t[pos] / len(present)
    return AnytimeEstimate(value=est.reshape((-1,) + first.shape[1:]), m=len(present),
                           config_ref=config.identity())


def srht_sketch(A, m: int, N: int, seed: int, permutation: bool = False) -> np.ndarray:
    """``(1/sqrt m) P H D A`` with +/-1 ``H`` and Rademacher ``D``.

    ``P`` samples ``m`` rows uniformly with replacement; with
    ``permutation=True`` (only for ``m == N``) every row is taken once.
    """
    A = np.asarray(A, dtype=np.float64)
    log2_exact(N)
    if A.shape[0] != N:
        raise ValueError(f"A must have N={N} rows, got {A.shape[0]}")
    if not 1 <= m <= N:
        raise ValueError(f"sketch size m must satisfy 1 <= m <= N, got {m}")
    if permutation and m != N:
        raise ValueError("permutation mode requires m == N")
    rng = np.random.default_rng(seed)
    d = rng.integers(0, 2, size=N) * 2.0 - 1.0
    rows = rng.permutation(N) if permutation else rng.integers(0, N, size=m)
    HDA = fwht(d.reshape((N,) + (1,) * (A.ndim - 1)) * A)
    return HDA[rows] / np.sqrt(m)


@dataclass
class EquivalenceReport:
    max_rel_deviation: float
    m: int
    estimate: np.ndarray
    reference: np.ndarray

    @property
    def ok(self) -> bool:
        return self.max_rel_deviation <= 1e-10


def estimator_equivalence_check(out: OutputSet, config: CodeConfig, x, A
                                ) -> EquivalenceReport:
    """Compare the fast estimate with the dense sketch ``S_H^T S_H``.

    ``S_H = (1/sqrt m) P H D`` uses the code's own signs and picks exactly the
    rows of the finished workers; the reference applies it to the zero-padded
    stack of true block products ``A_k x``.
    """
    est = anytime_estimate(out, config).value
    N, s = config.N, config.s
    rev = bit_reverse_permutation(N)
    blocks = np.asarray(A, dtype=np.float64) @ np.asarray(x, dtype=np.float64)
    blocks = blocks.reshape((s, -1) + blocks.shape[1:])
    cols = rev[list(config.data_positions)]
    padded = np.zeros((N,) + blocks.shape[1:])
    padded[cols] = blocks
    present = sorted(out.present)
    m = len(present)
    P = np.eye(N)[present]
    S_H = P @ hadamard(N) @ np.diag(config.signs[rev]) / np.sqrt(m)
    ref = np.tensordot(S_H.T @ S_H, padded, axes=1)[cols]
    ref = ref.reshape(est.shape)
    scale = max(float(np.max(np.abs(ref))), np.finfo(float).tiny)
    dev = float(np.max(np.abs(est - ref))) / scale
    return EquivalenceReport(max_rel_deviation=dev, m=m, estimate=est, reference=ref)


def dense_estimate(out: OutputSet, config: CodeConfig) -> np.ndarray:
    """``(1/|S|) sum z_w y_w^T`` with the materialized generator (slow reference)."""
    Z = materialize_Z(config)
    present = sorted(out.present)
    Y = np.stack([np.asarray(out.outputs[w], dtype=np.float64) for w in present])
    est = np.tensordot(Z[present].T, Y, axes=1) / len(present)
    return est.reshape((-1,) + Y.shape[2:])


def write_estimate_rows(path, rows) -> None:
    """CSV of ``(trial, m, value)`` rows for the plotting script."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "m", "value"])
        for trial, m, value in rows:
            w.writerow([int(trial), int(m), repr(float(value))])
