"""Coded gradient descent for least squares.

``A^T A`` is encoded once; each iteration dispatches the encoded blocks
times ``x_t``, waits for the first decodable set, decodes ``A^T A x_t``
exactly and takes the step ``x_{t+1} = x_t - mu (A^T A x_t - A^T y)``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from ..decoder import decode
from ..polarcode import CodeConfig, encode
from ..simlab import (Arrival, BlockJob, RunTimeModel, collect_until_decodable, run_parallel,
                      sample_times)

HISTORY_COLUMNS = ("iteration", "cost", "sim_clock", "wall_clock")


class Diverged(RuntimeError):
    def __init__(self, message, *, iteration: int, cost: float, initial_cost: float):
        super().__init__(message)
        self.iteration = iteration
        self.cost = cost
        self.initial_cost = initial_cost


@dataclass
class GDState:
    x: np.ndarray
    mu: float
    initial_cost: float
    # rows of (iteration, cost, sim_clock, wall_clock); cost is that of the new iterate
    history: list = field(default_factory=list)
    decode_times: list = field(default_factory=list)

    @property
    def costs(self) -> np.ndarray:
        return np.array([h[1] for h in self.history])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            w.writerow([0, repr(self.initial_cost), repr(0.0), repr(0.0)])
            for it, cost, sim, wall in self.history:
                w.writerow([it, repr(cost), repr(sim), repr(wall)])


def power_lambda_max(M: np.ndarray, steps: int = 20, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    v = np.random.default_rng(seed).standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(steps):
        w = M @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return float(v @ (M @ v))


def _cost(A, y, x) -> float:
    r = A @ x - y
    return float(np.sum(r * r))


def _prepare(A, y, mu, x0):
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if A.ndim != 2 or y.shape[0] != A.shape[0]:
        raise ValueError("A must be n x d and y must have n rows")
    AtA = A.T @ A
    Aty = A.T @ y
    if mu is None:
        lam = power_lambda_max(AtA)
        if lam <= 0:
            raise ValueError("A^T A is zero; no step size can be chosen")
        mu = 1.0 / lam
    if not mu > 0:
        raise ValueError(f"step size must be positive, got {mu}")
    x = np.zeros_like(Aty) if x0 is None else np.array(x0, dtype=np.float64)
    return A, y, AtA, Aty, float(mu), x


def _check(state: GDState, it: int, cost: float):
    if not np.isfinite(cost) or cost > 1e3 * max(state.initial_cost, np.finfo(float).tiny):
        raise Diverged(f"gradient descent diverged at iteration {it}: cost {cost:.6g} exceeds "
                       f"1000x the initial cost {state.initial_cost:.6g}; reduce the step size "
                       f"(mu={state.mu:.6g})", iteration=it, cost=cost,
                       initial_cost=state.initial_cost)


def gd_least_squares(A, y, mu=None, iters: int = 30, x0=None) -> GDState:
    """Textbook gradient descent; the reference for the coded driver."""
    A, y, AtA, Aty, mu, x = _prepare(A, y, mu, x0)
    state = GDState(x=x, mu=mu, initial_cost=_cost(A, y, x))
    t0 = time.perf_counter()
    for it in range(1, iters + 1):
        x = x - mu * (AtA @ x - Aty)
        cost = _cost(A, y, x)
        _check(state, it, cost)
        state.x = x
        state.history.append((it, cost, 0.0, time.perf_counter() - t0))
    return state


def _pad_rows(M: np.ndarray, s: int) -> np.ndarray:
    extra = (-M.shape[0]) % s
    if extra == 0:
        return M
    return np.concatenate([M, np.zeros((extra,) + M.shape[1:])], axis=0)


def coded_gd_least_squares(A, y, mu=None, iters: int = 30, config: CodeConfig | None = None,
                           mode: str = "simulated", model: RunTimeModel | None = None,
                           x0=None, time_scale: float | None = None) -> GDState:
    """Gradient descent whose ``A^T A x_t`` products come from coded workers.

    ``mode`` is ``"simulated"`` (completion order from ``model``; without a
    model every worker finishes at once) or ``"threads"`` (a real pool).
    Simulated worker times are multiplied by ``time_scale``, default
    ``N / s``, because each coded block holds ``N / s`` times the rows of an
    uncoded ``N``-way split.
    """
    if config is None:
        raise ValueError("a code configuration is required")
    if mode not in ("simulated", "threads"):
        raise ValueError(f"unknown execution mode {mode!r}")
    A, y, AtA, Aty, mu, x = _prepare(A, y, mu, x0)
    d = AtA.shape[0]
    enc = encode(_pad_rows(AtA, config.s), config)
    scale = config.N / config.s if time_scale is None else float(time_scale)
    state = GDState(x=x, mu=mu, initial_cost=_cost(A, y, x))
    sim_clock = 0.0
    t0 = time.perf_counter()
    for it in range(1, iters + 1):
        tasks = [BlockJob(enc.blocks[w], x) for w in range(config.N)]
        if mode == "threads":
            arrivals = run_parallel(tasks)
        elif model is None:
            arrivals = (Arrival(w, t(), 0.0) for w, t in enumerate(tasks))
        else:
            arrivals = run_parallel(tasks, model=model, trial=it)
        out = collect_until_decodable(arrivals, config)
        step_time = max(out.times.values())
        if mode == "simulated":
            step_time *= scale
        sim_clock += step_time
        state.decode_times.append(step_time)
        AtAx = decode(out, config)[:d]
        x = x - mu * (AtAx - Aty)
        cost = _cost(A, y, x)
        _check(state, it, cost)
        state.x = x
        state.history.append((it, cost, sim_clock, time.perf_counter() - t0))
    return state


def uncoded_iteration_times(model: RunTimeModel, N: int, iters: int) -> np.ndarray:
    """Wait-for-all baseline: each iteration ends at the slowest of ``N`` workers."""
    return np.array([sample_times(model, N, it).max() for it in range(1, iters + 1)])
