"""``polarcomp`` command line.

Every command writes a JSON manifest next to its main output (or to
``--manifest``) holding the exact argument vector and the resolved settings;
``polarcomp replay MANIFEST`` re-runs it. Exit codes: 0 success, 2 usage
error, 3 not decodable, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .decoder import NotDecodable, OutputSet, Stalled, decode
from .matio import MatrixFormatError, read_matrix, write_matrix
from .polarcode import CodeConfig, add_privacy_pad, build_code, encode
from .sketch import anytime_estimate

EXIT_OK, EXIT_USAGE, EXIT_NOT_DECODABLE, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _load_config(path) -> CodeConfig:
    return CodeConfig.from_json(Path(path).read_text())


def _load_present(path) -> dict[int, np.ndarray]:
    """Present-set file: JSON object mapping worker index to its output file."""
    path = Path(path)
    spec = json.loads(path.read_text())
    if not isinstance(spec, dict):
        raise UsageError(f"{path}: expected a JSON object of worker index -> output file")
    out = {}
    for k, v in spec.items():
        f = Path(v)
        out[int(k)] = read_matrix(f if f.is_absolute() else path.parent / f)
    return out


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---- commands -------------------------------------------------------------

def cmd_build(args) -> list[str]:
    cfg = build_code(args.N, args.s, args.epsilon, args.seed)
    if args.pad_seed is not None:
        cfg, _ = add_privacy_pad(cfg, args.pad_seed)
    Path(args.out).write_text(cfg.to_json() + "\n")
    print(f"frozen inputs: {list(cfg.frozen)}")
    return [args.out]


def cmd_encode(args) -> list[str]:
    cfg = _load_config(args.config)
    enc = encode(read_matrix(args.A), cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = len(str(cfg.N - 1))
    index, written = {}, []
    for w in range(cfg.N):
        name = f"worker_{w:0{width}d}.pcmx"
        write_matrix(out_dir / name, enc.blocks[w])
        index[str(w)] = name
        written.append(str(out_dir / name))
    (out_dir / "workers.json").write_text(json.dumps(index, indent=2) + "\n")
    return written + [str(out_dir / "workers.json")]


def cmd_work(args) -> list[str]:
    write_matrix(args.out, read_matrix(args.block) @ read_matrix(args.x))
    return [args.out]


def cmd_decode(args) -> list[str]:
    cfg = _load_config(args.config)
    out = OutputSet.from_outputs(_load_present(args.present))
    write_matrix(args.out, decode(out, cfg))
    return [args.out]


def cmd_estimate(args) -> list[str]:
    cfg = _load_config(args.config)
    outputs = _load_present(args.present)
    if not outputs:
        raise UsageError("the anytime estimate needs at least one worker output")
    est = anytime_estimate(OutputSet.from_outputs(outputs), cfg)
    write_matrix(args.out, est.value)
    print(f"estimate from {est.m} of {cfg.N} workers")
    return [args.out]


def _model(args):
    from .simlab import parse_model
    return parse_model(args.model, seed=args.seed)


def _rate_to_s(N: int, epsilon: float) -> int:
    s = int(round(N * (1.0 - epsilon)))
    if not 1 <= s <= N:
        raise UsageError(f"epsilon={epsilon} leaves no data inputs at N={N}")
    return s


def cmd_sim(args) -> list[str]:
    from .simlab import (decodability_time, mds_decodability_time, polarized_times,
                         sample_times_batch)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    model = _model(args)
    rows = []
    if args.what in ("runtimes", "polarize"):
        if len(args.N) != 1:
            raise UsageError(f"{args.what} takes a single --N")
        N = args.N[0]
        times = sample_times_batch(model, N, args.trials)
        if args.what == "runtimes":
            cols = [times.ravel()]
        else:
            pt = polarized_times(times)
            cols = [pt[:, i] for i in range(N)]
        lo = min(float(c.min()) for c in cols)
        hi = max(float(c.max()) for c in cols)
        for i, c in enumerate(cols):
            counts, edges = np.histogram(c, bins=args.bins, range=(lo, hi))
            for b, n in enumerate(counts):
                rows.append([i, repr(float(edges[b])), repr(float(edges[b + 1])), int(n)])
        _write_rows(args.out, ["index", "bin_left", "bin_right", "count"], rows)
        return [args.out]
    summary = []
    reports = {}
    for N in args.N:
        s = _rate_to_s(N, args.epsilon)
        if args.what == "decodability":
            rep = decodability_time(model, build_code(N, s, args.epsilon, args.code_seed),
                                    args.trials)
        else:
            rep = mds_decodability_time(model, N, s, args.trials)
        reports[N] = rep
        summary.append([N, s, repr(rep.mean), repr(rep.variance)])
    lo = min(float(r.decode_times.min()) for r in reports.values())
    hi = max(float(r.decode_times.max()) for r in reports.values())
    for N, rep in reports.items():
        for a, b, n in rep.histogram(bins=args.bins, range=(lo, hi)):
            rows.append([N, repr(a), repr(b), n])
    _write_rows(args.out, ["N", "bin_left", "bin_right", "count"], rows)
    written = [args.out]
    if args.summary:
        _write_rows(args.summary, ["N", "s", "mean", "variance"], summary)
        written.append(args.summary)
    for N, s, mean, var in summary:
        print(f"N={N} s={s} mean={float(mean):.6g} variance={float(var):.6g}")
    return written


def cmd_app(args) -> list[str]:
    from .simlab import parse_model
    if args.what == "gd":
        from .apps.gd import coded_gd_least_squares
        if args.A:
            A = read_matrix(args.A)
            y = read_matrix(args.y)[:, 0]
        else:
            rng = np.random.default_rng(args.seed)
            A = rng.standard_normal((args.n, args.d))
            y = A @ rng.standard_normal(args.d) + 0.1 * rng.standard_normal(args.n)
        cfg = build_code(args.N, _rate_to_s(args.N, args.epsilon), args.epsilon, args.seed)
        model = parse_model(args.model, seed=args.seed) if args.mode == "simulated" else None
        st = coded_gd_least_squares(A, y, args.mu, args.iters, cfg, mode=args.mode, model=model)
        if not args.record_wall_clock:
            st.history = [(i, c, s, 0.0) for i, c, s, _ in st.history]
        st.write_csv(args.out)
        print(f"final cost {st.costs[-1]:.6g} after {args.iters} iterations")
        return [args.out]
    if args.what == "blackbox":
        from .apps.blackbox import run_l1_comparison
        if args.objective != "l1":
            raise UsageError(f"unknown objective {args.objective!r}")
        rows, finals = [], {}
        for seed in range(args.seed, args.seed + args.seeds):
            res = run_l1_comparison(seed, iters=args.iters, mu0=args.mu0, guard=args.guard)
            for name, costs in res.items():
                finals.setdefault(name, []).append(costs[-1])
                rows += [[name, seed, it, repr(float(c))] for it, c in enumerate(costs)]
        _write_rows(args.out, ["method", "seed", "iteration", "cost"], rows)
        for name, v in finals.items():
            print(f"{name}: median final cost {np.median(v):.6g}")
        return [args.out]
    from .apps.matmul2d import coded_matmul_2d
    rng = np.random.default_rng(args.seed)
    cA = build_code(args.N1, _rate_to_s(args.N1, args.epsilon), args.epsilon, args.seed)
    cB = build_code(args.N2, _rate_to_s(args.N2, args.epsilon), args.epsilon, args.seed + 1)
    A = read_matrix(args.A) if args.A else rng.standard_normal((cA.s * 3, 5))
    B = read_matrix(args.B) if args.B else rng.standard_normal((A.shape[1], cB.s * 2))
    if A.shape[0] % cA.s or B.shape[1] % cB.s:
        raise UsageError(f"A rows must divide by {cA.s} and B columns by {cB.s}")
    present = rng.random((args.N1, args.N2)) >= args.erasure_rate
    C = coded_matmul_2d(A, B, cA, cB, present=present)
    write_matrix(args.out, C)
    err = float(np.max(np.abs(C - A @ B)) / max(np.max(np.abs(A @ B)), 1e-300))
    print(f"{int(present.sum())} of {present.size} products present; "
          f"max relative error vs A@B {err:.3g}")
    return [args.out]


def cmd_replay(args) -> list[str]:
    manifest = json.loads(Path(args.manifest).read_text())
    code = main(manifest["argv"])
    if code:
        raise SystemExit(code)
    return []


# ---- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polarcomp",
                                description="Randomized polar codes for coded computation.")
    p.add_argument("--version", action="version", version=f"polarcomp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        sp.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
        return sp

    sp = add("build", cmd_build, "build a code configuration")
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--s", type=int, required=True)
    sp.add_argument("--epsilon", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--pad-seed", type=int, help="add a random privacy pad")
    sp.add_argument("--out", required=True)

    sp = add("encode", cmd_encode, "encode a matrix into worker blocks")
    sp.add_argument("--config", required=True)
    sp.add_argument("--A", required=True)
    sp.add_argument("--out-dir", required=True)

    sp = add("work", cmd_work, "one worker's multiply: block @ x")
    sp.add_argument("--block", required=True)
    sp.add_argument("--x", required=True)
    sp.add_argument("--out", required=True)

    for name, func, help in (("decode", cmd_decode, "exact decode from worker outputs"),
                             ("estimate", cmd_estimate, "anytime estimate from any outputs")):
        sp = add(name, func, help)
        sp.add_argument("--config", required=True)
        sp.add_argument("--present", required=True,
                        help="JSON object mapping worker index to output file")
        sp.add_argument("--out", required=True)

    sp = add("sim", cmd_sim, "straggler simulations (CSV)")
    sp.add_argument("what", choices=("runtimes", "polarize", "decodability", "mds"))
    sp.add_argument("--model", default="uniform:0,1",
                    help="uniform:a,b | exponential:rate | shifted_exponential:shift,rate | "
                         "empirical[:file]")
    sp.add_argument("--N", type=_int_list, default=[4])
    sp.add_argument("--epsilon", type=float, default=0.375)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--code-seed", type=int, default=0)
    sp.add_argument("--bins", type=_positive, default=50)
    sp.add_argument("--summary", help="optional per-N summary CSV")
    sp.add_argument("--out", required=True)

    sp = add("app", cmd_app, "applications (CSV)")
    sp.add_argument("what", choices=("gd", "blackbox", "matmul2d"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--epsilon", type=float, default=0.25)
    sp.add_argument("--iters", type=int, default=30)
    # gd
    sp.add_argument("--A")
    sp.add_argument("--B")
    sp.add_argument("--y")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--d", type=int, default=50)
    sp.add_argument("--N", type=int, default=16)
    sp.add_argument("--mu", type=float)
    sp.add_argument("--mode", choices=("simulated", "threads"), default="simulated")
    sp.add_argument("--model", default="shifted_exponential:1,1")
    sp.add_argument("--record-wall-clock", action="store_true",
                    help="fill the wall_clock column (makes output non-reproducible)")
    # blackbox
    sp.add_argument("--objective", default="l1")
    sp.add_argument("--seeds", type=_positive, default=20)
    sp.add_argument("--mu0", type=float, default=1.0)
    sp.add_argument("--guard", action="store_true",
                    help="reject steps that do not lower the objective")
    # matmul2d
    sp.add_argument("--N1", type=int, default=4)
    sp.add_argument("--N2", type=int, default=4)
    sp.add_argument("--erasure-rate", type=float, default=0.0)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.set_defaults(func=cmd_replay)
    sp.add_argument("manifest")
    return p


def _write_manifest(args, argv, outputs) -> None:
    if args.command == "replay" or not outputs:
        return
    path = args.manifest or f"{getattr(args, 'out', None) or args.out_dir}.manifest.json"
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
    doc = {"tool": "polarcomp", "version": __version__, "argv": list(argv),
           "resolved": resolved, "outputs": sorted(outputs)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        outputs = args.func(args)
        _write_manifest(args, argv, outputs)
    except NotDecodable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_DECODABLE
    except Stalled as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_DECODABLE
    except (UsageError, MatrixFormatError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        msg = str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_NUMERICAL if "non-finite" in msg else EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
