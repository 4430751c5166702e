"""Black-box optimization with coded directional derivatives.

The objective can only be evaluated. Three gradient estimators are offered:
coordinate finite differences, antithetic evolution strategies, and a coded
estimator whose workers each return one symmetric directional derivative
along a row of the polar generator ``Z``. Those derivatives are linear in
the direction up to ``O(delta**2)``, so the ordinary decoder recovers the
gradient from the first decodable set of workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import hadamard

from .._hadamard import is_power_of_two
from ..decoder import OutputSet, decode_blocks
from ..polarcode import CodeConfig, build_code, encode_blocks
from ..simlab import Arrival, RunTimeModel, collect_until_decodable, run_parallel, sample_times


class EstimatorFailure(ArithmeticError):
    """The objective returned a non-finite value."""


@dataclass
class BlackBoxProblem:
    objective: Callable[[np.ndarray], float]
    dim: int
    delta: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.delta is not None and not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    def step(self, theta) -> float:
        """``delta``, defaulting to ``1e-4 * (max|theta| + 1)``."""
        if self.delta is not None:
            return float(self.delta)
        return 1e-4 * (float(np.max(np.abs(theta))) + 1.0)

    def __call__(self, theta) -> float:
        v = float(self.objective(theta))
        if not np.isfinite(v):
            raise EstimatorFailure(f"objective returned {v} at theta with norm "
                                   f"{np.linalg.norm(theta):.6g}")
        return v


def _theta(problem: BlackBoxProblem, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (problem.dim,):
        raise ValueError(f"theta must have shape ({problem.dim},), got {theta.shape}")
    return theta


def directional_derivative(problem: BlackBoxProblem, theta, v, delta: float) -> float:
    """Symmetric difference ``[f(theta + delta v) - f(theta - delta v)] / (2 delta)``."""
    if not np.any(v):
        return 0.0
    return (problem(theta + delta * v) - problem(theta - delta * v)) / (2.0 * delta)


def finite_diff_grad(problem: BlackBoxProblem, theta, coords: Sequence[int] | None = None
                     ) -> np.ndarray:
    """Central differences per coordinate; coordinates outside ``coords`` stay zero."""
    theta = _theta(problem, theta)
    delta = problem.step(theta)
    g = np.zeros(problem.dim)
    idx = range(problem.dim) if coords is None else coords
    for i in idx:
        e = np.zeros(problem.dim)
        e[i] = 1.0
        g[i] = directional_derivative(problem, theta, e, delta)
    return g


def es_directions(dim: int, N: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    """``N x dim`` perturbation directions.

    ``hadamard_rademacher`` takes the first ``N`` rows of ``H_M D`` restricted
    to the first ``dim`` columns, with ``M`` the smallest power of 2 covering
    both ``N`` and ``dim``. When ``dim`` is itself a power of 2 and ``N <= dim``
    the directions are exactly orthogonal.
    """
    if mode == "gaussian":
        return rng.standard_normal((N, dim))
    if mode == "hadamard_rademacher":
        if not is_power_of_two(N):
            raise ValueError(f"hadamard_rademacher needs N a power of 2, got {N}")
        M = 1
        while M < max(N, dim):
            M *= 2
        D = rng.integers(0, 2, size=M) * 2.0 - 1.0
        return (hadamard(M) * D)[:N, :dim].astype(np.float64)
    raise ValueError(f"unknown direction mode {mode!r}")


def es_grad(problem: BlackBoxProblem, theta, N: int, mode: str = "gaussian", seed: int = 0,
            available: Sequence[int] | None = None) -> np.ndarray:
    """Antithetic ES estimate ``(1/(2 N delta)) sum [f(+) - f(-)] eps_i``.

    With ``available`` only those directions are evaluated and the sum is
    normalized by their count instead of ``N``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    theta = _theta(problem, theta)
    delta = problem.step(theta)
    eps = es_directions(problem.dim, N, mode, np.random.default_rng(seed))
    idx = list(range(N)) if available is None else [int(i) for i in available]
    if not idx:
        raise ValueError("at least one direction must be available")
    g = np.zeros(problem.dim)
    for i in idx:
        g += directional_derivative(problem, theta, eps[i], delta) * eps[i]
    return g / len(idx)


def coded_directions(config: CodeConfig) -> np.ndarray:
    """Worker directions: the encoded unit vectors, i.e. the rows of ``Z``."""
    if config.pad_index is not None:
        raise ValueError("black-box coding does not use a privacy pad")
    return encode_blocks(np.eye(config.s), config).blocks


def coded_blackbox_grad(problem: BlackBoxProblem, theta, config: CodeConfig,
                        present: Sequence[int] | None = None, model: RunTimeModel | None = None,
                        trial: int = 0, return_outputs: bool = False):
    """Gradient from coded directional derivatives.

    ``present`` forces a worker subset (``NotDecodable`` if it fails);
    otherwise with a ``model`` the first decodable set in simulated
    completion order is used, and without one every worker.
    """
    if config.s != problem.dim:
        raise ValueError(f"config.s={config.s} must equal the problem dimension {problem.dim}")
    theta = _theta(problem, theta)
    delta = problem.step(theta)
    V = coded_directions(config)

    def job(w):
        return lambda: np.float64(directional_derivative(problem, theta, V[w], delta))

    tasks = [job(w) for w in range(config.N)]
    if present is not None:
        out = OutputSet.from_outputs({int(w): tasks[int(w)]() for w in present})
    elif model is not None:
        out = collect_until_decodable(run_parallel(tasks, model=model, trial=trial), config)
    else:
        out = collect_until_decodable((Arrival(w, t(), 0.0) for w, t in enumerate(tasks)),
                                      config)
    g = decode_blocks(out, config)
    return (g, out) if return_outputs else g


def l1_problem(n: int = 200, d: int = 32, seed: int = 0, delta: float | None = None):
    """``f(theta) = ||A theta - b||_1`` with Gaussian ``A`` and a planted solution."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    b = A @ rng.standard_normal(d) + 0.1 * rng.standard_normal(n)
    return BlackBoxProblem(lambda th: float(np.sum(np.abs(A @ th - b))), d, delta), A, b


def run_l1_comparison(seed: int, iters: int = 100, n: int = 200, d: int = 32,
                         mu0: float = 1.0, guard: bool = False, normalize: bool = True) -> dict:
    """Subgradient descent on the l1 objective with three half-budget estimators.

    Workers finish in uniform(0,1) order. Finite differences use the first
    ``d/2`` of ``d`` coordinates to finish, structured ES the first ``d/2`` of
    ``d`` rows of ``H D``, and the coded method (``N = 2d``, rate 1/2) the
    first decodable set. The step is ``mu0 / sqrt(t + 1)`` along the
    normalized estimate (``normalize=False`` uses the raw estimate), so the
    methods differ only in direction quality. With ``guard`` a
    step that does not lower the objective is rejected. Returns method name to
    per-iteration cost array (entry 0 is the starting cost).
    """
    problem, A, b = l1_problem(n, d, seed)
    model = RunTimeModel.uniform(0.0, 1.0, seed=seed)
    config = build_code(2 * d, d, 0.5, seed)
    half = d // 2

    def fd(theta, t):
        order = np.argsort(sample_times(model, d, t), kind="stable")
        return finite_diff_grad(problem, theta, coords=order[:half])

    def es(theta, t):
        order = np.argsort(sample_times(model, d, t), kind="stable")
        return es_grad(problem, theta, d, "hadamard_rademacher", seed=seed * 100003 + t,
                       available=order[:half])

    def coded(theta, t):
        return coded_blackbox_grad(problem, theta, config, model=model, trial=t)

    results = {}
    for name, grad in (("finite_diff", fd), ("structured_es", es), ("coded", coded)):
        theta = np.zeros(d)
        costs = [problem(theta)]
        for t in range(iters):
            g = grad(theta, t)
            if normalize:
                g = g / max(np.linalg.norm(g), np.finfo(float).tiny)
            cand = theta - mu0 / np.sqrt(t + 1) * g
            if guard and problem(cand) > costs[-1]:
                costs.append(costs[-1])
                continue
            theta = cand
            costs.append(problem(theta))
        results[name] = np.array(costs)
    return results
