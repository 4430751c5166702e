"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports its measured numbers.
"""

import time
from dataclasses import replace
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from oracles import all_subsets, dense_Z
from polarcomp.apps import BlackBoxProblem, coded_blackbox_grad, coded_matmul_2d
from polarcomp.apps.blackbox import run_l1_comparison
from polarcomp.decoder import OutputSet, Stalled, decodable_mask, decode, peel_2d_mask
from polarcomp.kernellab import erasure_profile, is_polarizing_2x2, is_polarizing_pxp
from polarcomp.polarcode import build_code, encode
from polarcomp.simlab import (RunTimeModel, decodability_time, first_decodable_prefix,
                              mds_decodability_time, polarized_times, sample_times,
                              sample_times_batch)
from polarcomp.sketch import anytime_estimate, estimator_equivalence_check

pytestmark = pytest.mark.acceptance


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def test_01_round_trip(record_acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, decodes = 0.0, 0
    for N in (2, 4, 8, 16, 32):
        for s in sorted({1, N // 2, N - 1, N}):
            if s < 1:
                continue
            cfg = build_code(N, s, 0.5, N * 100 + s)
            # 50 independent (A, x) instances decoded together as extra output columns
            As = rng.standard_normal((50, 2 * s, 3))
            xs = rng.standard_normal((50, 3, 2))
            Y = np.concatenate([encode(A, cfg).blocks @ x for A, x in zip(As, xs)], axis=-1)
            truth = np.concatenate([A @ x for A, x in zip(As, xs)], axis=-1)
            if N <= 16:
                subsets = list(all_subsets(N))
                masks = np.zeros((len(subsets), N), dtype=bool)
                for i, S in enumerate(subsets):
                    masks[i, list(S)] = True
                sets = [np.flatnonzero(m) for m in masks[decodable_mask(masks, cfg)]]
            else:
                sets = [np.arange(N)]
                cand = rng.random((4000, N)) < rng.random((4000, 1))
                sets += [np.flatnonzero(m) for m in cand[decodable_mask(cand, cfg)][:200]]
            for S in sets:
                got = decode(OutputSet.from_array(Y, S), cfg)
                worst = max(worst, _rel(got, truth))
                decodes += 1
    ok = worst <= 1e-9
    record_acceptance(1, "exact-recovery round trip", ok,
                      f"{decodes} decodes x 50 instances, max rel err {worst:.2e} "
                      f"(tol 1e-9), {time.perf_counter() - t0:.1f}s")
    assert ok


def test_02_profile_values(record_acceptance):
    got = sorted(erasure_profile(0.5, 4).probs)
    printed = sorted(Fraction(v) for v in ("0.938", "0.563", "0.438", "0.063"))
    # exact decimal comparison: the printed values are 3-digit roundings
    dev = max(abs(Fraction(a) - b) for a, b in zip(got, printed))
    ok = dev <= Fraction("5e-4")
    record_acceptance(2, "N=4 erasure profile", ok,
                      f"{[float(p) for p in sorted(got, reverse=True)]}, max dev {float(dev):.1e}")
    assert ok


CDFS_N4 = [
    lambda t: t**4,                      # density 4t^3
    lambda t: 2 * t**2 - t**4,           # density 4t(1-t)(1+t)
    lambda t: 4 * t**2 - 4 * t**3 + t**4,  # density 4t(1-t)(2-t)
    lambda t: 1 - (1 - t) ** 4,          # density 4(1-t)^3
]


def _ks(sample, cdf):
    x = np.sort(sample)
    n = len(x)
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def test_03_example_order_statistics(record_acceptance):
    t0 = time.perf_counter()
    T = polarized_times(sample_times_batch(RunTimeModel.uniform(0, 1, seed=3), 4, 1_000_000))
    ks = [_ks(T[:, i], F) for i, F in enumerate(CDFS_N4)]
    ok = max(ks) <= 0.01
    record_acceptance(3, "uniform N=4 polarized time CDFs", ok,
                      f"KS {[f'{k:.4f}' for k in ks]} (tol 0.01), "
                      f"{time.perf_counter() - t0:.1f}s")
    assert ok


def test_04_unbiasedness(record_acceptance):
    t0 = time.perf_counter()
    N, s, M = 16, 12, 20000
    rng = np.random.default_rng(4)
    A = rng.standard_normal((2 * s, 6))
    x = rng.standard_normal(6)
    truth = A @ x
    # frozen set depends only on (N, s, eps); each trial draws fresh signs
    base = build_code(N, s, 0.25, 0)
    worst = 0.0
    for m in (2, 6, 10):
        est = np.empty((M, 2 * s))
        for t in range(M):
            cfg = replace(base, seed=10**6 * m + t, signs_seed=10**6 * m + t)
            y = encode(A, cfg).blocks @ x
            S = rng.choice(N, size=m, replace=False)
            est[t] = anytime_estimate(OutputSet.from_array(y, S), cfg).value.ravel()
        z = np.abs(est.mean(0) - truth) / (est.std(0, ddof=1) / np.sqrt(M))
        worst = max(worst, float(z.max()))
    ok = worst <= 5.0
    record_acceptance(4, "anytime estimator unbiased", ok,
                      f"max |bias| = {worst:.2f} standard errors (tol 5), "
                      f"{time.perf_counter() - t0:.1f}s")
    assert ok


def test_05_srht_equivalence(record_acceptance):
    rng = np.random.default_rng(5)
    worst = 0.0
    for case in range(100):
        N = int(2 ** rng.integers(1, 7))
        s = int(rng.integers(1, N + 1))
        cfg = build_code(N, s, float(rng.uniform(0.1, 0.9)), case)
        A = rng.standard_normal((s * int(rng.integers(1, 4)), 4))
        x = rng.standard_normal((4,) if case % 2 else (4, 2))
        m = int(rng.integers(1, N + 1))
        S = rng.choice(N, size=m, replace=False)
        out = OutputSet.from_array(encode(A, cfg).blocks @ x, S)
        worst = max(worst, estimator_equivalence_check(out, cfg, x, A).max_rel_deviation)
    ok = worst <= 1e-10
    record_acceptance(5, "estimator equals blockwise S_H^T S_H", ok,
                      f"100 cases, max rel deviation {worst:.1e} (tol 1e-10)")
    assert ok


def test_06_anytime_error_monotone(record_acceptance):
    t0 = time.perf_counter()
    N, s = 32, 24
    rng = np.random.default_rng(6)
    A = rng.standard_normal((960, 100))
    x = rng.standard_normal(100)
    truth = A @ x
    model = RunTimeModel.exponential(seed=6)
    sizes = list(range(4, 25, 4))
    err = np.empty((100, len(sizes)))
    exact_worst = 0.0
    for t in range(100):
        cfg = build_code(N, s, 0.25, 600 + t)
        y = encode(A, cfg).blocks @ x
        times = sample_times(model, N, t)
        order = np.argsort(times, kind="stable")
        for j, m in enumerate(sizes):
            est = anytime_estimate(OutputSet.from_array(y, order[:m]), cfg).value.ravel()
            err[t, j] = np.sum((est - truth) ** 2)
        L = first_decodable_prefix(times, cfg)
        got = decode(OutputSet.from_array(y, order[:L]), cfg)
        exact_worst = max(exact_worst, _rel(got, truth))
    med = np.median(err, axis=0)
    ok = bool(np.all(np.diff(med) <= 0)) and exact_worst <= 1e-9
    record_acceptance(6, "anytime error nonincreasing in |S|", ok,
                      f"median sq err {[f'{v:.3g}' for v in med]}, exact decode rel err "
                      f"{exact_worst:.1e}, {time.perf_counter() - t0:.1f}s")
    assert ok


def test_07_decodability_concentration(record_acceptance):
    t0 = time.perf_counter()
    eps = 0.375
    model = RunTimeModel.shifted_exponential(1.0, 1.0, seed=7)
    var, gap, mds_ok = [], [], True
    for N in (8, 64, 512):
        s = round(N * (1 - eps))
        polar = decodability_time(model, build_code(N, s, eps, 7), 1000)
        mds = mds_decodability_time(model, N, s, 1000)
        var.append(polar.variance)
        mds_ok &= mds.mean <= polar.mean
        gap.append((polar.mean - mds.mean) / mds.mean)
    ok = var[0] > var[1] > var[2] and mds_ok and gap[2] < gap[0]
    record_acceptance(7, "decodability time concentrates", ok,
                      f"variance {[f'{v:.4f}' for v in var]}, polar-vs-MDS rel gap "
                      f"{[f'{g:.3f}' for g in gap]}, {time.perf_counter() - t0:.1f}s")
    assert ok


def _best(f, reps):
    ts = []
    for _ in range(reps):
        t = time.perf_counter()
        f()
        ts.append(time.perf_counter() - t)
    return min(ts)


def _r2_nlogn(Ns, t):
    f = np.array([N * np.log2(N) for N in Ns])
    t = np.asarray(t)
    c = (f @ t) / (f @ f)
    return 1 - np.sum((t - c * f) ** 2) / np.sum((t - t.mean()) ** 2)


def _timings(Ns, shape_of, reps):
    rng = np.random.default_rng(8)
    te, td = [], []
    for N in Ns:
        (rows, cols), xcols = shape_of(N)
        A = rng.standard_normal((rows, cols))
        x = rng.standard_normal((cols, xcols))
        cfg = build_code(N, N // 2, 0.5, 8)
        out = OutputSet.from_array(encode(A, cfg).blocks @ x, range(N))
        te.append(_best(lambda: encode(A, cfg), reps))
        td.append(_best(lambda: decode(out, cfg), reps))
    return te, td


def test_08_complexity_scaling(record_acceptance):
    t0 = time.perf_counter()
    Ns = [2**k for k in range(6, 13)]
    # the measured experiment grows A with N (100 rows per worker block), so the
    # number of block operations is the N log N quantity being checked
    te, td = _timings(Ns, lambda N: ((100 * N, 16), 4), reps=5)
    r_enc, r_dec = _r2_nlogn(Ns, te), _r2_nlogn(Ns, td)
    # fixed total data: per-op cost shrinks as 1/N, so only log N growth remains
    fe, fd = _timings(Ns, lambda N: ((4096 * 8, 16), 4), reps=2)
    ok = r_enc >= 0.95 and r_dec >= 0.95
    record_acceptance(8, "encode/decode time ~ N log N", ok,
                      f"R^2 encode {r_enc:.3f}, decode {r_dec:.3f} (tol 0.95; 100N x 16 data); "
                      f"informational fixed-total-size R^2 encode {_r2_nlogn(Ns, fe):.2f}, "
                      f"decode {_r2_nlogn(Ns, fd):.2f}; {time.perf_counter() - t0:.1f}s")
    assert ok


def test_09_blackbox_exactness(record_acceptance):
    rng = np.random.default_rng(9)
    d = 16
    a = rng.standard_normal(d)
    Q = rng.standard_normal((d, d))
    Q = Q + Q.T
    c = rng.standard_normal(d)
    th = rng.standard_normal(d)
    cfg = build_code(32, d, 0.5, 9)
    m = RunTimeModel.uniform(seed=9)
    e_lin = _rel(coded_blackbox_grad(BlackBoxProblem(lambda t: a @ t, d), th, cfg, model=m), a)
    e_quad = _rel(coded_blackbox_grad(BlackBoxProblem(lambda t: t @ Q @ t, d), th, cfg,
                                      model=m, trial=1), 2 * Q @ th)
    grad = 3 * c * th**2
    deltas = 0.2 / 2.0 ** np.arange(6)
    errs = [np.linalg.norm(coded_blackbox_grad(BlackBoxProblem(lambda t: c @ t**3, d, dl),
                                               th, cfg, model=m, trial=2) - grad)
            for dl in deltas]
    slope = float(np.polyfit(np.log(deltas), np.log(errs), 1)[0])
    ok = e_lin <= 1e-9 and e_quad <= 1e-9 and 1.8 <= slope <= 2.2
    record_acceptance(9, "coded black-box gradient", ok,
                      f"linear rel err {e_lin:.1e}, quadratic {e_quad:.1e} (tol 1e-9), "
                      f"cubic delta slope {slope:.3f} (want 1.8..2.2)")
    assert ok


def test_10_l1_method_ordering(record_acceptance):
    t0 = time.perf_counter()
    finals = {"finite_diff": [], "structured_es": [], "coded": []}
    for seed in range(20):
        for name, costs in run_l1_comparison(seed, iters=100).items():
            finals[name].append(costs[-1])
    med = {k: float(np.median(v)) for k, v in finals.items()}
    ok = med["coded"] <= med["structured_es"] and med["coded"] <= med["finite_diff"]
    record_acceptance(10, "l1 subgradient ordering", ok,
                      "median final cost over 20 seeds: "
                      + ", ".join(f"{k} {v:.2f}" for k, v in med.items())
                      + f", {time.perf_counter() - t0:.1f}s")
    assert ok


def test_11_decode_2d(record_acceptance):
    rng = np.random.default_rng(11)
    cA, cB = build_code(4, 2, 0.5, 1), build_code(4, 2, 0.5, 2)
    A, B = rng.standard_normal((6, 5)), rng.standard_normal((5, 8))
    truth = A @ B
    good = bad = bad_ok = 0
    worst = 0.0
    while good < 200 or bad < 200:
        mask = rng.random((4, 4)) >= rng.uniform(0.1, 0.6)
        if peel_2d_mask(mask, cA, cB):
            if good < 200:
                worst = max(worst, _rel(coded_matmul_2d(A, B, cA, cB, present=mask), truth))
                good += 1
        elif bad < 200:
            bad += 1
            try:
                coded_matmul_2d(A, B, cA, cB, present=mask)
            except Stalled:
                bad_ok += 1
    ok = worst <= 1e-9 and bad_ok == bad
    record_acceptance(11, "2D coded matmul", ok,
                      f"{good} peelable patterns max rel err {worst:.1e}; "
                      f"Stalled on {bad_ok}/{bad} non-peelable")
    assert ok


# ---- exact kernel predicates ------------------------------------------------

def _rank_q(rows):
    """Rank over the rationals by fraction-exact elimination."""
    M = [[Fraction(int(v)) for v in r] for r in rows]
    rank, col = 0, 0
    ncols = len(M[0]) if M else 0
    while rank < len(M) and col < ncols:
        piv = next((i for i in range(rank, len(M)) if M[i][col] != 0), None)
        if piv is None:
            col += 1
            continue
        M[rank], M[piv] = M[piv], M[rank]
        for i in range(len(M)):
            if i != rank and M[i][col] != 0:
                f = M[i][col] / M[rank][col]
                M[i] = [a - f * b for a, b in zip(M[i], M[rank])]
        rank += 1
        col += 1
    return rank


def _polarizing_by_definition(K):
    """Input ``j`` must be recoverable from any ``p - j`` outputs once inputs ``< j`` are known.

    Recoverable means ``e_j`` lies in the row space of the chosen kernel rows
    stacked with ``e_0..e_{j-1}``. ``K`` must also be invertible (all outputs
    determine all inputs), which is the ``j = 0`` case for every input.
    """
    p = len(K)
    eye = np.eye(p, dtype=int)
    if _rank_q(K) < p:
        return False
    for j in range(p):
        for R in combinations(range(p), p - j):
            M = [K[r] for r in R] + [eye[i] for i in range(j)]
            if _rank_q(M + [eye[j]]) != _rank_q(M):
                return False
    return True


def test_12_kernel_predicates(record_acceptance):
    rng = np.random.default_rng(12)
    mismatches, positives = 0, 0
    for p in (2, 3, 4):
        for _ in range(1000):
            K = rng.integers(-2, 3, size=(p, p)) * (rng.random((p, p)) < 0.8)
            want = _polarizing_by_definition(K.tolist())
            positives += want
            got = is_polarizing_2x2(K) if p == 2 else is_polarizing_pxp(K)
            mismatches += got != want
            if p == 2:
                mismatches += bool(is_polarizing_pxp(K)) != want
    named = {"H2": [[1, 1], [1, -1]], "F2": [[1, 1], [0, 1]],
             "tri3": [[1, 1, 1], [0, -1, 1], [0, 0, 1]],
             "tri4": [[1, 1, 1, 1], [0, 1, 2, 3], [0, 0, 1, 4], [0, 0, 0, 1]]}
    named_ok = all(is_polarizing_pxp(K) and _polarizing_by_definition(K)
                   for K in named.values())
    ok = mismatches == 0 and named_ok
    record_acceptance(12, "kernel predicates vs exact brute force", ok,
                      f"3000 random integer kernels ({positives} polarizing), {mismatches} "
                      f"mismatches; named kernels all polarizing: {named_ok}")
    assert ok


def test_dense_generator_oracle_agrees_with_encoder():
    # sanity link between the oracle module used above and the encoder
    cfg = build_code(8, 5, 0.5, 3)
    A = np.random.default_rng(0).standard_normal((5, 2))
    np.testing.assert_allclose(encode(A, cfg).blocks,
                               (dense_Z(8, cfg.data_positions, cfg.signs) @ A)[:, None, :]
                               .reshape(encode(A, cfg).blocks.shape), atol=1e-12)
