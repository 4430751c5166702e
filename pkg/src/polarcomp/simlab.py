"""Seeded straggler simulation.

Workers don't interact, so a simulated run is just a sort of sampled
completion times followed by a scan for the first decodable prefix. Every
draw is a pure function of ``(model.seed, trial, N)``; trials are seeded in
chunks so that large batches stay cheap.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from ._hadamard import bit_reverse_permutation, log2_exact
from .decoder import OutputSet, decodable_mask
from .polarcode import CodeConfig

KINDS = ("uniform", "exponential", "shifted_exponential", "empirical")


@dataclass(frozen=True)
class RunTimeModel:
    kind: str
    params: tuple = ()
    seed: int = 0
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown run-time model {self.kind!r}; choose from {KINDS}")
        p = self.params
        if self.kind == "uniform":
            if len(p) != 2 or not 0 <= p[0] < p[1] or not np.isfinite(p[1]):
                raise ValueError("uniform needs 0 <= a < b")
        elif self.kind == "exponential":
            if len(p) != 1 or not p[0] > 0:
                raise ValueError("exponential needs rate > 0")
        elif self.kind == "shifted_exponential":
            if len(p) != 2 or not p[0] >= 0 or not p[1] > 0:
                raise ValueError("shifted_exponential needs shift >= 0 and rate > 0")
        else:
            s = self.samples
            if s is None or len(s) == 0:
                raise ValueError("empirical model needs at least one sample")
            if not np.all(np.isfinite(s)) or np.any(s < 0):
                raise ValueError("empirical samples must be finite and nonnegative")

    @classmethod
    def uniform(cls, a=0.0, b=1.0, seed=0):
        return cls("uniform", (float(a), float(b)), seed)

    @classmethod
    def exponential(cls, rate=1.0, seed=0):
        return cls("exponential", (float(rate),), seed)

    @classmethod
    def shifted_exponential(cls, shift=1.0, rate=1.0, seed=0):
        return cls("shifted_exponential", (float(shift), float(rate)), seed)

    @classmethod
    def empirical(cls, source, seed=0):
        """Resample a trace; ``source`` is an array or a file with one time per line."""
        if isinstance(source, (str, os.PathLike)):
            samples = load_trace(source)
            params = (str(source),)
        else:
            samples = np.asarray(source, dtype=np.float64).ravel()
            params = ()
        samples.setflags(write=False)
        return cls("empirical", params, seed, samples)

    def _draw(self, rng: np.random.Generator, size) -> np.ndarray:
        p = self.params
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], size)
        if self.kind == "exponential":
            return rng.exponential(1.0 / p[0], size)
        if self.kind == "shifted_exponential":
            return p[0] + rng.exponential(1.0 / p[1], size)
        return self.samples[rng.integers(0, len(self.samples), size)]


def load_trace(path) -> np.ndarray:
    vals = [float(line) for line in Path(path).read_text().split("\n") if line.strip()]
    return np.asarray(vals, dtype=np.float64)


def bundled_trace_path() -> Path:
    """Synthetic 500-sample stand-in for a serverless completion-time trace."""
    return Path(__file__).with_name("data") / "synthetic_runtimes.txt"


def parse_model(spec: str, seed: int = 0) -> RunTimeModel:
    """Parse ``kind[:p1,p2]``, e.g. ``uniform:0,1`` or ``empirical:trace.txt``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip().replace("-", "_")
    if kind == "empirical":
        return RunTimeModel.empirical(rest or bundled_trace_path(), seed)
    defaults = {"uniform": (0.0, 1.0), "exponential": (1.0,), "shifted_exponential": (1.0, 1.0)}
    if kind not in defaults:
        raise ValueError(f"unknown run-time model {kind!r}")
    params = tuple(float(v) for v in rest.split(",")) if rest else defaults[kind]
    return RunTimeModel(kind, params, seed)


#: Trials sharing one generator; trial ``t`` is row ``t % CHUNK`` of chunk ``t // CHUNK``.
CHUNK = 256


def _chunk(model: RunTimeModel, N: int, c: int) -> np.ndarray:
    rng = np.random.default_rng([int(model.seed), int(c), int(N)])
    return model._draw(rng, (CHUNK, N))


def sample_times(model: RunTimeModel, N: int, trial: int) -> np.ndarray:
    """I.i.d. completion times of ``N`` workers, a pure function of (seed, trial, N)."""
    if N < 1:
        raise ValueError("N must be positive")
    if trial < 0:
        raise ValueError("trial must be nonnegative")
    return _chunk(model, N, trial // CHUNK)[trial % CHUNK].copy()


def sample_times_batch(model: RunTimeModel, N: int, trials: int, start: int = 0) -> np.ndarray:
    """Rows ``start .. start + trials - 1``; row ``i`` equals ``sample_times(model, N, start + i)``."""
    if N < 1:
        raise ValueError("N must be positive")
    stop = start + trials
    parts = []
    for c in range(start // CHUNK, (stop - 1) // CHUNK + 1 if trials > 0 else start // CHUNK):
        block = _chunk(model, N, c)
        lo = max(start - c * CHUNK, 0)
        hi = min(stop - c * CHUNK, CHUNK)
        parts.append(block[lo:hi])
    return np.concatenate(parts) if parts else np.zeros((0, N))


def polarized_times(times) -> np.ndarray:
    """Run time at which each transformed input becomes recoverable.

    Works on the last axis. Worker pairs adjacent in index are combined
    first into ``(max, min)``, then recursively; the output is in encoder
    input order, so ``out[0]`` is the overall max and ``out[-1]`` the min.
    """
    t = np.asarray(times, dtype=np.float64)
    N = t.shape[-1]
    k = log2_exact(N)
    lead = t.shape[:-1]
    t = t[..., bit_reverse_permutation(N)]
    for j in range(k - 1, -1, -1):
        h = 1 << j
        v = t.reshape(lead + (N // (2 * h), 2, h))
        t = np.stack([np.maximum(v[..., 0, :], v[..., 1, :]),
                      np.minimum(v[..., 0, :], v[..., 1, :])], axis=-2).reshape(lead + (N,))
    return t


@dataclass
class SimReport:
    times: np.ndarray
    decode_times: np.ndarray
    sizes: np.ndarray

    def quantiles(self, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict:
        return {float(q): float(np.quantile(self.decode_times, q)) for q in qs}

    @property
    def mean(self) -> float:
        return float(self.decode_times.mean())

    @property
    def variance(self) -> float:
        return float(self.decode_times.var(ddof=1)) if len(self.decode_times) > 1 else 0.0

    def histogram(self, bins=30, range=None):
        counts, edges = np.histogram(self.decode_times, bins=bins, range=range)
        return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


def write_histogram_csv(path, rows, extra: dict | None = None) -> None:
    """Rows of ``(bin_left, bin_right, count)``; ``extra`` adds constant leading columns."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(extra) + ["bin_left", "bin_right", "count"])
        for lo, hi, c in rows:
            w.writerow(list(extra.values()) + [repr(lo), repr(hi), c])


def first_decodable_prefix(times: np.ndarray, config: CodeConfig) -> int:
    """Length of the shortest arrival-order prefix that decodes.

    Decodability is monotone under adding outputs, so prefixes are bisected.
    """
    order = np.argsort(times, kind="stable")
    N = config.N

    def ok(L):
        mask = np.zeros(N, dtype=bool)
        mask[order[:L]] = True
        return bool(decodable_mask(mask, config))

    if not ok(N):
        raise AssertionError("the full output set must always be decodable")
    lo, hi = 0, N
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def decodability_time(model: RunTimeModel, config: CodeConfig, trials: int) -> SimReport:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    times = sample_times_batch(model, config.N, trials)
    sizes = np.array([first_decodable_prefix(t, config) for t in times])
    srt = np.sort(times, axis=1)
    dec = srt[np.arange(trials), sizes - 1]
    return SimReport(times=times, decode_times=dec, sizes=sizes)


def mds_decodability_time(model: RunTimeModel, N: int, k: int, trials: int) -> SimReport:
    """Recovery at the ``k``-th fastest worker, as for an MDS code."""
    if not 1 <= k <= N:
        raise ValueError(f"k must satisfy 1 <= k <= N={N}, got {k}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    times = sample_times_batch(model, N, trials)
    dec = np.sort(times, axis=1)[:, k - 1]
    return SimReport(times=times, decode_times=dec, sizes=np.full(trials, k))


@dataclass
class Arrival:
    index: int
    output: np.ndarray
    time: float


@dataclass
class BlockJob:
    """One worker's task: multiply its encoded block by ``x``."""

    block: np.ndarray
    x: np.ndarray

    def __call__(self):
        return self.block @ self.x


def pool_size(n_tasks: int) -> int:
    env = os.environ.get("POLARCOMP_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1) + 4
    return max(1, min(limit, n_tasks))


def run_parallel(tasks: Sequence[Callable[[], np.ndarray]], model: RunTimeModel | None = None,
                 trial: int = 0, max_workers: int | None = None) -> Iterator[Arrival]:
    """Yield finished outputs in completion order.

    With a ``model`` completion times are simulated and jobs evaluated in that
    order; without one the jobs run on a bounded thread pool and are
    timestamped on arrival. A job that raises never arrives.
    """
    if model is not None:
        times = sample_times(model, len(tasks), trial)
        for i in np.argsort(times, kind="stable"):
            try:
                out = tasks[i]()
            except Exception:
                continue
            yield Arrival(int(i), out, float(times[i]))
        return
    pool = ThreadPoolExecutor(max_workers=max_workers or pool_size(len(tasks)))
    start = time.perf_counter()
    try:
        futures = {pool.submit(t): i for i, t in enumerate(tasks)}
        for fut in as_completed(futures):
            if fut.exception() is not None:
                continue
            yield Arrival(futures[fut], fut.result(), time.perf_counter() - start)
    finally:
        pool.shutdown(wait=False, cancel_futures=True)


def collect_until_decodable(arrivals: Iterable[Arrival], config: CodeConfig) -> OutputSet:
    """Consume arrivals until the collected set first becomes decodable."""
    mask = np.zeros(config.N, dtype=bool)
    outputs, times = {}, {}
    try:
        for a in arrivals:
            outputs[a.index] = a.output
            times[a.index] = a.time
            mask[a.index] = True
            if decodable_mask(mask, config):
                return OutputSet(present=frozenset(outputs), outputs=outputs, times=times)
    finally:
        close = getattr(arrivals, "close", None)
        if close is not None:
            close()
    raise RuntimeError(f"only {len(outputs)} of {config.N} workers delivered; "
                       "the outputs never became decodable")
