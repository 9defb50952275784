"""Command-line entry point: ``mvica fit | synth-benchmark | eval``.

Exit codes: 0 on success, 1 on I/O errors, 2 on invalid input, 3 when a fit
finishes without converging (its outputs are still written).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmark
from .initialization import init_pipeline, permica
from .matrix_io import load_manifest, load_matrix, store_matrix
from .metrics import align, r2_score, reconstruction_error, time_segment_matching
from .model import (
    DimensionError,
    SolverConfig,
    logcosh,
    negative_log_likelihood,
)
from .solver import fit, relative_gradient

logger = logging.getLogger("mvica")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


def _noise_grid(text):
    try:
        low, high, points = text.split(",")
        low, high, points = float(low), float(high), int(points)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH,POINTS, got {text!r}") from None
    if not (0 < low <= high) or points < 1:
        raise argparse.ArgumentTypeError(f"invalid noise grid {text!r}")
    return benchmark.noise_grid(low, high, points)


def _methods(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    unknown = [n for n in names if n not in benchmark.METHODS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {unknown}; choose from {','.join(benchmark.METHODS)}"
        )
    return names


def build_parser():
    parser = argparse.ArgumentParser(prog="mvica", description="MultiView ICA")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit MultiView ICA on the views listed in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-sweeps", type=int, default=10000)
    p.add_argument("--init", choices=("pipeline", "identity", "permica"), default="pipeline")
    p.add_argument("--seed", type=int, default=0,
                   help="recorded in summary.txt; the fit itself draws no random numbers")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("synth-benchmark", help="noise sweep on synthetic data")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--noise-grid", type=_noise_grid, default="0.01,10,10",
                   metavar="LOW,HIGH,POINTS", help="geometric grid (default 0.01,10,10)")
    p.add_argument("--methods", type=_methods, default=",".join(benchmark.METHODS))
    p.add_argument("--model", choices=("shared", "sensor"), default="shared")
    p.add_argument("--obs-dim", type=int, default=50,
                   help="sensors per view for --model sensor")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-sweeps", type=int, default=10000)
    p.add_argument("--no-timing", action="store_true",
                   help="write wall_time_seconds as nan so results.csv is reproducible")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="compare estimated sources with a reference")
    p.add_argument("metric", choices=("r2", "recon", "tsm"))
    p.add_argument("--est", type=Path, required=True)
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--window", type=int, default=9)
    return parser


def _write_summary(path, items):
    lines = [f"{key}={value}" for key, value in items]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def cmd_fit(args):
    data = load_manifest(args.manifest)
    cfg = SolverConfig(sigma=args.sigma, tol=args.tol, max_sweeps=args.max_sweeps)
    c = logcosh()
    if args.init == "pipeline":
        init = init_pipeline(data, cfg, c)
    elif args.init == "permica":
        init = permica(data, c, cfg=cfg)
    else:
        init = None
    res = fit(data, cfg, c, init)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    for i, W in enumerate(res.unmixing.matrices):
        store_matrix(W, out / f"W_{i}.csv")
    store_matrix(res.sources, out / "sources.csv")
    loss = negative_log_likelihood(res.unmixing, data, cfg, c)
    grad = max(
        float(np.max(np.abs(relative_gradient(i, res.unmixing, data, cfg, c))))
        for i in range(data.m)
    )
    _write_summary(out / "summary.txt", [
        ("final_loss", format(loss, ".17g")),
        ("gradient_norm", format(grad, ".17g")),
        ("sweeps", res.sweeps),
        ("converged", "true" if res.converged else "false"),
        ("init", args.init),
        ("sigma", format(args.sigma, ".17g")),
        ("tol", format(args.tol, ".17g")),
        ("seed", args.seed),
    ])
    if not res.converged:
        logger.warning("no convergence after %d sweeps (gradient %.3g)", res.sweeps, grad)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_synth_benchmark(args):
    setup = benchmark.BenchmarkSetup(
        m=args.m, k=args.k, n=args.n, model=args.model, obs_dim=args.obs_dim,
        sigma=args.sigma, tol=args.tol, max_sweeps=args.max_sweeps,
        timing=not args.no_timing,
    )
    # fail on bad solver flags before any cell runs
    SolverConfig(sigma=args.sigma, tol=args.tol, max_sweeps=args.max_sweeps)
    if min(args.m, args.k, args.n, args.seeds) < 1:
        raise ValueError("--m, --k, --n and --seeds must be positive")
    if args.model == "sensor" and args.obs_dim < args.k:
        raise ValueError("--obs-dim must be >= --k")
    args.out.mkdir(parents=True, exist_ok=True)
    rows = benchmark.run_benchmark(setup, args.seeds, args.noise_grid, args.methods)
    benchmark.write_results(rows, args.out / "results.csv")
    benchmark.write_summary(rows, args.out / "summary.csv")
    return EXIT_OK


def cmd_eval(args):
    est = load_matrix(args.est)
    ref = load_matrix(args.ref)
    if est.shape != ref.shape:
        raise DimensionError(f"shape mismatch: {est.shape} vs {ref.shape}")
    if args.metric == "r2":
        # match estimated rows to the reference first, as r2 needs a common scale
        matched = align(est, ref).apply(est)
        scores = [r2_score(matched[j], ref[j]) for j in range(ref.shape[0])]
        for j, score in enumerate(scores):
            print(f"r2_{j}={score!r}")
        print(f"r2_mean={float(np.mean(scores))!r}")
    elif args.metric == "recon":
        print(f"reconstruction_error={reconstruction_error(est, ref)!r}")
    else:
        print(f"accuracy={time_segment_matching(ref, est, win=args.window)!r}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "synth-benchmark": cmd_synth_benchmark, "eval": cmd_eval}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
