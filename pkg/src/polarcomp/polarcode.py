"""Randomized polar codes over the reals.

A code with ``N`` workers and ``s`` data blocks is ``Z = H D R``: ``R`` places
the data blocks at the reliable transformed inputs (zero blocks elsewhere),
``D`` flips signs with i.i.d. Rademacher entries and ``H`` is the +/-1
Sylvester-Hadamard matrix. Worker ``w`` receives row ``w`` of
``(Z kron I) A``.

Positions (``frozen``, ``data_positions``, ``signs``, ``pad_index``) live in
transformed-input order, the order in which the sequential decoder recovers
them. Transformed input ``p`` feeds Hadamard column ``bitrev(p)``; every
conversion happens inside this module and the decoder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.linalg import hadamard

from ._hadamard import OpCount, bit_reverse_permutation, fwht, is_power_of_two, log2_exact
from .kernellab import erasure_profile, select_frozen


@dataclass(frozen=True)
class CodeConfig:
    N: int
    s: int
    epsilon: float
    frozen: tuple[int, ...]
    seed: int
    signs_seed: int
    pad_index: int | None = None
    pad_seed: int | None = None

    def __post_init__(self):
        if not is_power_of_two(self.N):
            raise ValueError(f"N must be a power of 2, got {self.N}")
        object.__setattr__(self, "frozen", tuple(sorted(int(i) for i in self.frozen)))
        if len(set(self.frozen)) != len(self.frozen):
            raise ValueError("frozen indices must be distinct")
        if any(not 0 <= i < self.N for i in self.frozen):
            raise ValueError("frozen indices must lie in [0, N)")
        extra = 0 if self.pad_index is None else 1
        if not 1 <= self.s <= self.N - extra:
            raise ValueError(f"s must satisfy 1 <= s <= N, got s={self.s}, N={self.N}")
        if len(self.frozen) + extra != self.N - self.s:
            raise ValueError(f"need N - s = {self.N - self.s} non-data inputs, "
                             f"got {len(self.frozen)} frozen + {extra} pad")
        if self.pad_index is not None:
            if self.pad_index in self.frozen or not 0 <= self.pad_index < self.N:
                raise ValueError("pad_index must be a non-frozen input position")
            if self.pad_seed is None:
                raise ValueError("pad_seed is required with pad_index")

    @property
    def k(self) -> int:
        return log2_exact(self.N)

    @cached_property
    def signs(self) -> np.ndarray:
        rng = np.random.default_rng(self.signs_seed)
        d = rng.integers(0, 2, size=self.N).astype(np.float64) * 2.0 - 1.0
        d.setflags(write=False)
        return d

    @cached_property
    def data_positions(self) -> tuple[int, ...]:
        skip = set(self.frozen)
        if self.pad_index is not None:
            skip.add(self.pad_index)
        return tuple(i for i in range(self.N) if i not in skip)

    @cached_property
    def known_mask(self) -> np.ndarray:
        """Inputs known before any output arrives (the frozen ones)."""
        m = np.zeros(self.N, dtype=bool)
        m[list(self.frozen)] = True
        m.setflags(write=False)
        return m

    def identity(self) -> str:
        return f"N={self.N},s={self.s},frozen_seed={self.seed},signs_seed={self.signs_seed}"

    def to_dict(self) -> dict:
        d = {
            "N": self.N,
            "s": self.s,
            "epsilon": self.epsilon,
            "frozen": list(self.frozen),
            "seed": self.seed,
            "signs_seed": self.signs_seed,
        }
        if self.pad_index is not None:
            d["pad_index"] = self.pad_index
            d["pad_seed"] = self.pad_seed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "CodeConfig":
        return cls(
            N=int(d["N"]),
            s=int(d["s"]),
            epsilon=float(d["epsilon"]),
            frozen=tuple(int(i) for i in d["frozen"]),
            seed=int(d["seed"]),
            signs_seed=int(d["signs_seed"]),
            pad_index=None if d.get("pad_index") is None else int(d["pad_index"]),
            pad_seed=None if d.get("pad_seed") is None else int(d["pad_seed"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "CodeConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class EncodedBlocks:
    """Worker inputs: ``blocks[w]`` is the encoded block for worker ``w``."""

    blocks: np.ndarray
    config: CodeConfig = field(repr=False)

    def __len__(self):
        return self.blocks.shape[0]

    def __getitem__(self, w):
        return self.blocks[w]

    def stacked(self) -> np.ndarray:
        return self.blocks.reshape((-1,) + self.blocks.shape[2:])


def build_code(N: int, s: int, epsilon: float, seed: int) -> CodeConfig:
    if not is_power_of_two(N):
        raise ValueError(f"N must be a power of 2, got {N}")
    if not 1 <= s <= N:
        raise ValueError(f"s must satisfy 1 <= s <= N={N}, got {s}")
    frozen = select_frozen(erasure_profile(epsilon, N), s)
    return CodeConfig(N=N, s=s, epsilon=float(epsilon), frozen=frozen, seed=int(seed),
                      signs_seed=int(seed))


def materialize_generator(config: CodeConfig) -> np.ndarray:
    """Dense ``N x (s [+1])`` matrix: data columns, then the pad column if any."""
    N = config.N
    rev = bit_reverse_permutation(N)
    H = hadamard(N).astype(np.float64)
    cols = list(config.data_positions)
    if config.pad_index is not None:
        cols.append(config.pad_index)
    R = np.zeros((N, len(cols)))
    for c, p in enumerate(cols):
        R[rev[p], c] = 1.0
    D = np.diag(config.signs[rev])
    return H @ D @ R


def materialize_Z(config: CodeConfig) -> np.ndarray:
    """Dense ``H D R`` (``N x s``); test oracle for the fast encoder."""
    return materialize_generator(config)[:, : config.s]


def pad_block(config: CodeConfig, shape) -> np.ndarray:
    if config.pad_index is None:
        raise ValueError("config has no privacy pad")
    return np.random.default_rng(config.pad_seed).standard_normal(shape)


def encode_blocks(blocks, config: CodeConfig, ops: OpCount | None = None,
                  pad: np.ndarray | None = None) -> EncodedBlocks:
    """Encode ``s`` equally shaped data blocks into ``N`` worker blocks."""
    U = np.asarray(blocks, dtype=np.float64)
    if U.shape[0] != config.s:
        raise ValueError(f"expected {config.s} data blocks, got {U.shape[0]}")
    N = config.N
    inputs = np.zeros((N,) + U.shape[1:])
    pos = list(config.data_positions)
    sgn = config.signs.reshape((N,) + (1,) * (U.ndim - 1))
    inputs[pos] = sgn[pos] * U
    if config.pad_index is not None:
        if pad is None:
            pad = pad_block(config, U.shape[1:])
        inputs[config.pad_index] = sgn[config.pad_index] * pad
    out = fwht(inputs, ops)
    return EncodedBlocks(blocks=out[bit_reverse_permutation(N)], config=config)


def split_rows(A: np.ndarray, s: int) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim not in (1, 2):
        raise ValueError("A must be a vector or a matrix")
    n = A.shape[0]
    if n % s:
        raise ValueError(f"A has {n} rows, not divisible by s={s}")
    if not np.all(np.isfinite(A)):
        raise ValueError("A has non-finite entries")
    return A.reshape((s, n // s) + A.shape[1:])


def encode(A, config: CodeConfig, ops: OpCount | None = None) -> EncodedBlocks:
    """``(Z kron I_{n/s}) A`` via log2(N) stages of block sums and differences."""
    return encode_blocks(split_rows(A, config.s), config, ops)


def encode_partial(A, p: int, config_small: CodeConfig) -> list[EncodedBlocks]:
    """Split ``A`` into ``p`` row bands and encode each with ``config_small``."""
    A = np.asarray(A, dtype=np.float64)
    if p < 1:
        raise ValueError("p must be positive")
    if A.shape[0] % (p * config_small.s):
        raise ValueError(f"A has {A.shape[0]} rows, not divisible by p*s={p * config_small.s}")
    return [encode(band, config_small) for band in np.split(A, p, axis=0)]


def add_privacy_pad(config: CodeConfig, pad_seed: int
                    ) -> tuple[CodeConfig, Callable[[tuple], np.ndarray]]:
    """Turn the most reliable frozen input into a random Gaussian pad.

    Every Hadamard column is +/-1, so each worker block then carries the pad
    with a nonzero coefficient. The decoder recovers the pad like a data
    block and drops it.
    """
    if config.pad_index is not None:
        raise ValueError("config already carries a privacy pad")
    if not config.frozen:
        raise ValueError("no frozen input left for the pad: every position is used for data")
    probs = erasure_profile(config.epsilon, config.N).probs
    # most reliable frozen input; ties to the higher index
    pad = max(config.frozen, key=lambda i: (-probs[i], i))
    padded = CodeConfig(
        N=config.N,
        s=config.s,
        epsilon=config.epsilon,
        frozen=tuple(i for i in config.frozen if i != pad),
        seed=config.seed,
        signs_seed=config.signs_seed,
        pad_index=pad,
        pad_seed=int(pad_seed),
    )
    return padded, lambda shape: pad_block(padded, shape)
