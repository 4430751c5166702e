"""2D coded matrix multiplication.

``A`` is encoded by rows with ``configA`` into ``A~_1..A~_N1`` and ``B`` by
columns with ``configB`` into ``B~_1..B~_N2``; worker ``(i, j)`` computes
``A~_i B~_j``. Missing products are filled by peeling rows and columns.
"""

from __future__ import annotations

import numpy as np

from ..decoder import decode_2d, peel_2d_mask
from ..polarcode import CodeConfig, encode
from ..simlab import RunTimeModel, sample_times


def worker_grid(A, B, configA: CodeConfig, configB: CodeConfig) -> list[list[np.ndarray]]:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"incompatible shapes {A.shape} and {B.shape}")
    At = encode(A, configA).blocks
    Bt = encode(B.T, configB).blocks
    return [[At[i] @ Bt[j].T for j in range(configB.N)] for i in range(configA.N)]


def first_peelable_mask(model: RunTimeModel, configA: CodeConfig, configB: CodeConfig,
                        trial: int = 0) -> np.ndarray:
    """Present mask after the shortest completion-order prefix that peels."""
    N1, N2 = configA.N, configB.N
    order = np.argsort(sample_times(model, N1 * N2, trial), kind="stable")
    mask = np.zeros(N1 * N2, dtype=bool)
    for w in order:
        mask[w] = True
        grid = mask.reshape(N1, N2)
        if peel_2d_mask(grid, configA, configB):
            return grid.copy()
    raise AssertionError("the complete grid must always peel")


def coded_matmul_2d(A, B, configA: CodeConfig, configB: CodeConfig, present=None,
                    model: RunTimeModel | None = None, trial: int = 0) -> np.ndarray:
    """``A B`` from the surviving worker products.

    ``present`` is an ``N1 x N2`` boolean mask of finished workers; with a
    ``model`` instead the first peelable prefix in completion order is used.
    Without either every worker is present.
    """
    N1, N2 = configA.N, configB.N
    if present is not None and model is not None:
        raise ValueError("give either an erasure pattern or a run-time model, not both")
    if model is not None:
        mask = first_peelable_mask(model, configA, configB, trial)
    elif present is None:
        mask = np.ones((N1, N2), dtype=bool)
    else:
        mask = np.asarray(present, dtype=bool)
        if mask.shape != (N1, N2):
            raise ValueError(f"erasure pattern must be {N1}x{N2}, got {mask.shape}")
    grid = worker_grid(A, B, configA, configB)
    P = [[grid[i][j] if mask[i, j] else None for j in range(N2)] for i in range(N1)]
    return decode_2d(P, configA, configB)
