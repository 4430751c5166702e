"""Exact sequential decoding of randomized polar codes over the reals.

The decoding circuit has ``log2(N) + 1`` levels. Level 0 holds the
sign-scaled inputs in transformed order, level ``k = log2(N)`` the worker
outputs, and stage ``j`` maps level ``j`` to level ``j + 1`` by pairing node
``m`` (bit ``j`` clear, the *upper* node) with ``m + 2**j``::

    z[j+1, m]        = z[j, m] + z[j, m + 2**j]
    z[j+1, m + 2**j] = z[j, m] - z[j, m + 2**j]

Worker ``w`` sits at level-``k`` node ``bitrev(w)``. Inputs are recovered in
order ``0..N-1``: an upper node needs both nodes to its right, a lower node
needs either one plus its already known upper partner. After each completed
input pair the known inputs are pushed forward through the circuit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from ._hadamard import bit_reverse_permutation
from .polarcode import CodeConfig, encode_blocks


class NotDecodable(Exception):
    """The available outputs do not let the sequential decoder finish."""

    def __init__(self, message: str, *, available: int = 0, needed: int = 0,
                 first_failure: int | None = None):
        super().__init__(message)
        self.available = available
        self.needed = needed
        self.first_failure = first_failure


class Stalled(Exception):
    """2D peeling made no progress while grid entries were still missing."""

    def __init__(self, message: str, *, filled_fraction: float, filled: np.ndarray):
        super().__init__(message)
        self.filled_fraction = filled_fraction
        self.filled = filled


@dataclass
class OutputSet:
    present: frozenset
    outputs: Mapping[int, np.ndarray]
    times: Mapping[int, float] | None = None

    def __post_init__(self):
        self.present = frozenset(int(i) for i in self.present)
        if set(self.outputs) != set(self.present):
            raise ValueError("outputs must be defined exactly on the present set")

    @classmethod
    def from_outputs(cls, outputs: Mapping[int, np.ndarray], times=None) -> "OutputSet":
        return cls(present=frozenset(outputs), outputs=dict(outputs), times=times)

    @classmethod
    def from_array(cls, values: np.ndarray, present, times=None) -> "OutputSet":
        """Select the ``present`` rows of an ``(N, ...)`` array of worker outputs."""
        present = sorted(int(i) for i in present)
        return cls(present=frozenset(present), outputs={i: values[i] for i in present},
                   times=times)


@dataclass
class DecodeTrace:
    """Known flags (and values, unless a dry run) of every circuit node.

    Row ``j`` is level ``j``; column ``q`` of the last row is worker ``bitrev(q)``.
    """

    known: np.ndarray
    values: np.ndarray | None = None


class _Circuit:
    def __init__(self, config: CodeConfig, present, outputs=None, schedule="lazy"):
        if schedule not in ("lazy", "full"):
            raise ValueError(f"unknown propagation schedule {schedule!r}")
        self.config = config
        self.N = N = config.N
        self.k = k = config.k
        self.schedule = schedule
        self.known = np.zeros((k + 1, N), dtype=bool)
        rev = bit_reverse_permutation(N)
        present = [int(w) for w in present]
        if any(not 0 <= w < N for w in present):
            raise ValueError("present indices must lie in [0, N)")
        self.known[k, rev[present]] = True
        self.known[0, list(config.frozen)] = True
        self.values = None
        if outputs is not None:
            shapes = {np.shape(outputs[w]) for w in present}
            if len(shapes) > 1:
                raise ValueError(f"worker outputs have mismatched shapes: {sorted(shapes)}")
            shape = shapes.pop() if shapes else ()
            self.values = np.zeros((k + 1, N) + shape)
            for w in present:
                self.values[k, rev[w]] = outputs[w]

    def recover(self, j: int, m: int) -> bool:
        known = self.known
        if known[j, m]:
            return True
        if j == self.k:
            return False
        h = 1 << j
        pair = m ^ h
        right = self.recover(j + 1, m)
        right_pair = self.recover(j + 1, pair)
        v = self.values
        if not m & h:
            if not (right and right_pair):
                return False
            if v is not None:
                v[j, m] = (v[j + 1, m] + v[j + 1, pair]) * 0.5
        else:
            # the upper partner is always known here via forward propagation
            if not known[j, pair]:
                return False
            if right:
                if v is not None:
                    v[j, m] = v[j, pair] - v[j + 1, m]
            elif right_pair:
                if v is not None:
                    v[j, m] = v[j + 1, pair] - v[j, pair]
            else:
                return False
        known[j, m] = True
        return True

    def propagate(self, p: int):
        """Push known inputs ``0..p`` forward (levels 1..k-1; outputs stay as received)."""
        known, v = self.known, self.values
        for j in range(1, self.k):
            h = 1 << (j - 1)
            if self.schedule == "lazy":
                size = 2 * h
                if (p + 1) % size:
                    break
                lo = p + 1 - size
                up, dn = slice(lo, lo + h), slice(lo + h, lo + size)
                if v is not None:
                    a, b = v[j - 1, up], v[j - 1, dn]
                    v[j, up] = a + b
                    v[j, dn] = a - b
                known[j, lo:lo + size] = True
            else:
                for m in range(p + 1):
                    pair = m ^ h
                    if known[j - 1, m] and known[j - 1, pair]:
                        if v is not None:
                            u, l = (m, pair) if not m & h else (pair, m)
                            a, b = v[j - 1, u], v[j - 1, l]
                            v[j, m] = a + b if m == u else a - b
                        known[j, m] = True

    def run(self) -> int | None:
        """Recover every input; return the first unrecoverable data position, if any."""
        frozen = self.config.known_mask
        for p in range(self.N):
            if not self.recover(0, p) and not frozen[p]:
                return p
            if p % 2 == 1:
                self.propagate(p)
        return None

    def trace(self) -> DecodeTrace:
        return DecodeTrace(known=self.known, values=self.values)


def _needed(config: CodeConfig) -> int:
    return config.s + (config.pad_index is not None)


def dry_run(present, config: CodeConfig, schedule: str = "lazy") -> tuple[bool, DecodeTrace]:
    circ = _Circuit(config, present, schedule=schedule)
    return circ.run() is None, circ.trace()


def is_decodable(present, config: CodeConfig) -> bool:
    """Whether the sequential decoder recovers every data input from ``present``."""
    return dry_run(present, config)[0]


def decode_blocks(out: OutputSet, config: CodeConfig, schedule: str = "lazy",
                  return_trace: bool = False):
    """Recover the ``s`` data products as an ``(s, ...)`` array."""
    circ = _Circuit(config, sorted(out.present), out.outputs, schedule=schedule)
    fail = circ.run()
    if fail is not None:
        recovered = sum(1 for p in config.data_positions if circ.known[0, p])
        raise NotDecodable(
            f"outputs from {len(out.present)} of {config.N} workers are not decodable: "
            f"{recovered} of {config.s} data inputs recovered, first failure at input "
            f"position {fail}; at least {_needed(config)} outputs are needed",
            available=len(out.present), needed=_needed(config), first_failure=fail)
    pos = list(config.data_positions)
    v = circ.values
    sgn = config.signs[pos].reshape((-1,) + (1,) * (v.ndim - 2))
    result = v[0, pos] * sgn
    if return_trace:
        return result, circ.trace()
    return result


def decode(out: OutputSet, config: CodeConfig, schedule: str = "lazy",
           return_trace: bool = False):
    """Exact ``A x``: the recovered data products stacked along axis 0."""
    res = decode_blocks(out, config, schedule=schedule, return_trace=return_trace)
    blocks, trace = res if return_trace else (res, None)
    stacked = blocks.reshape((-1,) + blocks.shape[2:])
    return (stacked, trace) if return_trace else stacked


def decode_partial(outs: Sequence[OutputSet], config: CodeConfig) -> np.ndarray:
    """Decode each band of a partial construction and stack the results."""
    return np.concatenate([decode(o, config) for o in outs], axis=0)


def erased_inputs(present_mask, config: CodeConfig) -> np.ndarray:
    """Vectorized dry run: which transformed inputs the decoder cannot recover.

    ``present_mask`` has shape ``(..., N)`` over worker indices. An upper node
    is lost when either right-hand node is lost and a lower node only when
    both are, assuming every earlier input is known.
    """
    mask = np.asarray(present_mask, dtype=bool)
    N = config.N
    e = ~mask[..., bit_reverse_permutation(N)]
    lead = e.shape[:-1]
    for j in range(config.k - 1, -1, -1):
        h = 1 << j
        v = e.reshape(lead + (N // (2 * h), 2, h))
        up = v[..., 0, :] | v[..., 1, :]
        lo = v[..., 0, :] & v[..., 1, :]
        e = np.stack([up, lo], axis=-2).reshape(lead + (N,))
    return e


def decodable_mask(present_mask, config: CodeConfig) -> np.ndarray:
    need = list(config.data_positions)
    if config.pad_index is not None:
        need.append(config.pad_index)
    return ~np.any(erased_inputs(present_mask, config)[..., need], axis=-1)


def _peel(filled: np.ndarray, configA: CodeConfig, configB: CodeConfig
          ) -> Iterator[tuple[str, int]]:
    """Yield ("row", i) / ("col", j) decode steps, updating ``filled`` in place."""
    N1, N2 = filled.shape
    while not filled.all():
        progressed = False
        for i in range(N1):
            row = filled[i]
            if not row.all() and decodable_mask(row, configB):
                yield "row", i
                filled[i] = True
                progressed = True
        for j in range(N2):
            col = filled[:, j]
            if not col.all() and decodable_mask(col, configA):
                yield "col", j
                filled[:, j] = True
                progressed = True
        if not progressed:
            frac = float(filled.mean())
            raise Stalled(f"2D peeling stalled with {frac:.1%} of the grid filled",
                          filled_fraction=frac, filled=filled.copy())


def peel_2d_mask(present: np.ndarray, configA: CodeConfig, configB: CodeConfig) -> bool:
    """Dry run of the 2D decoder: True when peeling fills the whole grid."""
    filled = np.array(present, dtype=bool)
    try:
        for _ in _peel(filled, configA, configB):
            pass
    except Stalled:
        return False
    return True


def decode_2d(P, configA: CodeConfig, configB: CodeConfig) -> np.ndarray:
    """Recover ``A B`` from an ``N1 x N2`` grid of worker products (``None`` = missing).

    Decodable rows/columns with gaps are decoded and re-encoded to fill the
    gaps until the grid is complete; then every row and every column is
    decoded and the frozen positions are dropped.
    """
    N1, N2 = configA.N, configB.N
    if len(P) != N1 or any(len(r) != N2 for r in P):
        raise ValueError(f"expected a {N1}x{N2} grid")
    grid = [[None if P[i][j] is None else np.asarray(P[i][j], dtype=np.float64)
             for j in range(N2)] for i in range(N1)]
    filled = np.array([[g is not None for g in row] for row in grid])
    for kind, idx in _peel(filled, configA, configB):
        if kind == "row":
            have = {j: grid[idx][j] for j in range(N2) if grid[idx][j] is not None}
            full = encode_blocks(decode_blocks(OutputSet.from_outputs(have), configB), configB)
            for j in range(N2):
                if grid[idx][j] is None:
                    grid[idx][j] = full[j]
        else:
            have = {i: grid[i][idx] for i in range(N1) if grid[i][idx] is not None}
            full = encode_blocks(decode_blocks(OutputSet.from_outputs(have), configA), configA)
            for i in range(N1):
                if grid[i][idx] is None:
                    grid[i][idx] = full[i]
    rows = [decode_blocks(OutputSet.from_outputs(dict(enumerate(grid[i]))), configB)
            for i in range(N1)]
    cols = []
    for l in range(configB.s):
        col = {i: rows[i][l] for i in range(N1)}
        cols.append(decode_blocks(OutputSet.from_outputs(col), configA))
    # cols[l][k] = A_k B_l
    return np.block([[cols[l][k] for l in range(configB.s)] for k in range(configA.s)])
