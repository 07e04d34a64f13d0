"""Command-line entry point.

Subcommands: ``bench`` (run a protocol), ``curve`` (landscape curve CSVs
and figure), ``gradcheck`` (analytic-vs-finite-difference suites),
``replay`` (re-run from a previously emitted spec.json).

Exit codes: 0 success, 1 configuration error, 2 runtime abort (partial
artifacts are kept).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, harness, problems
from .core import RngStream

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powerhp",
        description="Power-homotopy optimization benchmarks and analysis.")
    sub = parser.add_subparsers(dest="command")

    bench = sub.add_parser("bench", help="run a benchmark protocol")
    bench.add_argument("--config", required=True, help="protocol JSON file")
    bench.add_argument("--out", required=True, help="output directory")
    bench.add_argument("--trials", type=int, help="override trial count")
    bench.add_argument("--seed", type=int, help="override master seed")
    bench.add_argument("--methods", help="comma-separated method labels to keep")
    bench.add_argument("--threads", type=int, default=None,
                       help="trial parallelism cap (default: POWERHP_THREADS or 1)")
    bench.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    bench.add_argument("--progress", action="store_true")

    curve = sub.add_parser("curve", help="emit 1-D surrogate curve CSVs")
    curve.add_argument("--problem", default="landscape1d",
                       choices=["landscape1d"])
    curve.add_argument("--N", default="2", help="comma-separated powers")
    curve.add_argument("--sigma", default="0.8",
                       help="comma-separated smoothing radii")
    curve.add_argument("--grid", nargs=3, type=float,
                       metavar=("LO", "HI", "STEPS"),
                       default=(-1.0, 1.0, 2001))
    curve.add_argument("--raw", action="store_true",
                       help="emit unnormalized curves")
    curve.add_argument("--out", required=True, help="output directory")
    curve.add_argument("--no-figures", action="store_true")

    grad = sub.add_parser("gradcheck", help="finite-difference oracle suites")
    grad.add_argument("--suite", default="all",
                      choices=["all", "phase_retrieval", "two_layer",
                               "landscape1d"])
    grad.add_argument("--seed", type=int, default=0)

    rep = sub.add_parser("replay", help="re-run from an emitted spec.json")
    rep.add_argument("--spec", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--threads", type=int, default=None)
    rep.add_argument("--progress", action="store_true")
    return parser


def _thread_count(flag_value) -> int:
    if flag_value is not None:
        return max(1, flag_value)
    env = os.environ.get("POWERHP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValueError(f"POWERHP_THREADS must be an integer: {env!r}") from exc
    return 1


def _cmd_bench(args) -> int:
    try:
        spec = harness.load_spec(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load config {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.trials is not None:
            spec = replace(spec, n_trials=args.trials)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        if args.methods:
            keep = [m.strip() for m in args.methods.split(",") if m.strip()]
            chosen = tuple(m for m in spec.methods if m.display in keep)
            missing = set(keep) - {m.display for m in chosen}
            if missing:
                raise ValueError(f"unknown methods requested: {sorted(missing)}")
            spec = replace(spec, methods=chosen)
        threads = _thread_count(args.threads)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(spec, args.out, threads, not args.no_figures, args.progress)


def _cmd_replay(args) -> int:
    try:
        spec = harness.load_spec(args.spec)
        threads = _thread_count(args.threads)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load spec {args.spec}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(spec, args.out, threads, render_figures=False,
                    progress=args.progress)


def _execute(spec, out_dir, threads, render_figures, progress=False) -> int:
    try:
        report = harness.run_protocol(spec, out_dir=out_dir, threads=threads,
                                      progress=progress)
    except Exception as exc:  # partial artifacts stay in out_dir
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if render_figures:
        from .plotting import plot_aggregate
        plot_aggregate(report, Path(out_dir) / "summary.png")
    for m in spec.methods:
        agg = report.per_method[m.display]
        t_str = "-" if agg.t_vs_reference is None else f"{agg.t_vs_reference:.2f}"
        print(f"{agg.method:>12s}  mean={agg.mean_metric:.4g}  "
              f"SR={agg.success_rate:.0%}  time={agg.mean_time_to_best:.0f}  "
              f"t={t_str}  aborted={agg.n_aborted}")
    return EXIT_OK


def _cmd_curve(args) -> int:
    try:
        powers = [float(x) for x in str(args.N).split(",") if x]
        sigmas = [float(x) for x in str(args.sigma).split(",") if x]
        lo, hi, steps = args.grid
        steps = int(steps)
        if not powers or not sigmas:
            raise ValueError("need at least one value for --N and --sigma")
    except ValueError as exc:
        print(f"error: bad curve arguments: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    normalized = not args.raw
    curve_sets = []
    try:
        for power in powers:
            for sigma in sigmas:
                samples = analysis.surrogate_curve_1d(
                    problems.landscape1d_f, power, sigma, (lo, hi, steps),
                    normalized=normalized, f_support=(-1.0, 1.0))
                name = f"curve_N{power:g}_sigma{sigma:g}.csv"
                analysis.export_curve(samples, out / name, power, sigma,
                                      normalized)
                curve_sets.append((power, sigma, samples))
    except (ValueError, OSError) as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.no_figures:
        from .plotting import plot_curves
        plot_curves(curve_sets, out / "curves.png")
    print(f"wrote {len(curve_sets)} curve file(s) to {out}")
    return EXIT_OK


def _gradcheck_case(label, loss_fn, grad_fn, points, tol) -> bool:
    worst = 0.0
    for w in points:
        approx = analysis.finite_diff_grad(loss_fn, w, 1e-5 * (1 + np.linalg.norm(w)))
        exact = grad_fn(w)
        denom = max(np.linalg.norm(exact), 1e-12)
        worst = max(worst, np.linalg.norm(approx - exact) / denom)
    ok = worst <= tol
    print(f"{'PASS' if ok else 'FAIL'}  {label}: max rel err {worst:.3g} "
          f"(tol {tol:g})")
    return ok


def _cmd_gradcheck(args) -> int:
    rng = RngStream(args.seed, 7).generator()
    suites = ([args.suite] if args.suite != "all"
              else ["phase_retrieval", "two_layer", "landscape1d"])
    all_ok = True
    for suite in suites:
        if suite == "phase_retrieval":
            prob, _ = problems.pr_generate(8, 30, RngStream(args.seed, 1))
            idx = np.arange(prob.n_samples)
            pts = [rng.normal(size=prob.dim) for _ in range(20)]
            all_ok &= _gradcheck_case(
                "phase_retrieval batch loss",
                lambda w: prob.loss(w, idx),
                lambda w: sum(prob.loss_grad(w, n) for n in idx) / idx.size,
                pts, 1e-4)
        elif suite == "two_layer":
            prob, _ = problems.tl_generate(5, 4, RngStream(args.seed, 2))
            xs = [rng.normal(size=prob.k) for _ in range(20)]
            pts = [rng.normal(size=prob.dim) for _ in range(20)]
            ok = True
            for w, x in zip(pts, xs):
                # keep away from the ReLU kinks
                if min(abs(w.reshape(prob.width, prob.k) @ x).min(),
                       abs(prob.teacher @ x).min()) < 1e-2:
                    continue
                approx = analysis.finite_diff_grad(
                    lambda v: prob.loss(v, x[None, :]), w, 1e-6 * (1 + np.linalg.norm(w)))
                exact = prob.loss_grad(w, x)
                ok &= (np.linalg.norm(approx - exact)
                       / max(np.linalg.norm(exact), 1e-12)) <= 1e-4
            print(f"{'PASS' if ok else 'FAIL'}  two_layer per-datum grad")
            all_ok &= ok
        else:
            pts = [np.array([rng.uniform(-0.9, 0.9)]) for _ in range(20)]
            all_ok &= _gradcheck_case(
                "landscape1d derivative",
                lambda w: float(problems.landscape1d_f(w[0])),
                lambda w: np.array([problems.landscape1d_f_grad(w[0])]),
                pts, 1e-4)
    return EXIT_OK if all_ok else EXIT_RUNTIME


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    handlers = {"bench": _cmd_bench, "curve": _cmd_curve,
                "gradcheck": _cmd_gradcheck, "replay": _cmd_replay}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
