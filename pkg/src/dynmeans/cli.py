"""``dynmeans`` command-line tool.

Subcommands: ``generate`` (synthetic benchmark), ``cluster``, ``eval``,
``sweep`` (parameter grid) and ``bench`` (accuracy/time versus restarts).

Exit codes: 0 success, 1 usage or flag error, 2 malformed input,
3 some timestep did not converge (results are still written).
"""
from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .core import DEFAULT_MAX_ITERS, DynMeansParams
from .evaluation import accuracy_report, summarize_times
from .formats import (
    FormatError,
    read_batches,
    read_labels,
    read_timing,
    write_batches,
    write_csv,
    write_jsonl,
    write_result,
    write_timing,
    write_truth,
)
from .pipeline import ReparamConfig, RunConfig, reparameterize, run_sequence
from .synthgen import SynthConfig, generate

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_UNCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _number(kind, check, what):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} value: {text!r}") from None
        if not (math.isfinite(value) and check(value)):
            raise argparse.ArgumentTypeError(f"{text!r} is not {what}")
        return value

    return parse


positive_float = _number(float, lambda v: v > 0, "> 0")
nonneg_float = _number(float, lambda v: v >= 0, ">= 0")
probability = _number(float, lambda v: 0 <= v <= 1, "in [0, 1]")
positive_int = _number(int, lambda v: v >= 1, ">= 1")
nonneg_int = _number(int, lambda v: v >= 0, ">= 0")
seed_int = _number(int, lambda v: 0 <= v < 2**64, "a 64-bit unsigned integer")


def grid_values(text: str) -> list:
    """Parse ``a,b,c`` or ``start:stop:num`` (inclusive linspace) into floats."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            values = np.linspace(float(start), float(stop), int(num)).tolist()
        else:
            values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse grid {text!r}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"grid {text!r} is empty or non-finite")
    return values


def int_list(text: str) -> list:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse integer list {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must list integers >= 1")
    return values


def _add_param_flags(p, grid=False):
    kind = grid_values if grid else positive_float
    p.add_argument("--lambda", dest="lam", type=kind, required=True, help="new-cluster cost")
    p.add_argument("--nq", dest="n_q", type=kind, help="steps a cluster can stay unobserved and still revive (> 1)")
    p.add_argument("--ktau", dest="k_tau", type=kind, help="revival distance multiplier after one step (>= 1)")
    if not grid:
        p.add_argument("--q", dest="q_penalty", type=positive_float, help="per-step revival penalty")
        p.add_argument("--tau", dest="tau", type=nonneg_float, help="motion uncertainty growth per step")


def _add_run_flags(p):
    p.add_argument("--restarts", type=positive_int, default=3)
    p.add_argument("--max-iters", type=positive_int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--seed", type=seed_int, default=0)


def _resolve(args):
    """Pick the parameterization from the flags; returns (params, n_q, k_tau)."""
    direct = [args.q_penalty is not None, args.tau is not None]
    reparam = [args.n_q is not None, args.k_tau is not None]
    if any(direct) and any(reparam):
        raise UsageError("--q/--tau and --nq/--ktau are mutually exclusive")
    if any(direct):
        if not all(direct):
            raise UsageError("--q and --tau must be given together")
        return DynMeansParams(args.lam, args.q_penalty, args.tau), None, None
    if not all(reparam):
        raise UsageError("give either --nq and --ktau (recommended) or --q and --tau")
    return _reparam(args.lam, args.n_q, args.k_tau), args.n_q, args.k_tau


def _reparam(lam, n_q, k_tau) -> DynMeansParams:
    if not n_q > 1:
        raise UsageError(f"--nq must be > 1, got {n_q}")
    if not k_tau >= 1:
        raise UsageError(f"--ktau must be >= 1, got {k_tau}")
    if not lam > 0:
        raise UsageError(f"--lambda must be > 0, got {lam}")
    return reparameterize(ReparamConfig(lam, n_q, k_tau))


def cmd_generate(args) -> int:
    cfg = SynthConfig(
        n_clusters=args.clusters,
        points_per_cluster=args.points_per_cluster,
        point_std=args.point_std,
        motion_std=args.motion_std,
        death_prob=args.death_prob,
        n_steps=args.steps,
        seed=args.seed,
    )
    data = generate(cfg)
    write_batches(args.output, data.batches)
    write_truth(args.truth, data)
    n_points = sum(len(b) for b in data.batches)
    print(f"steps={len(data)} clusters={len(data.trajectories)} points={n_points}")
    return EXIT_OK


def _header(params, n_q, k_tau, args) -> dict:
    return {
        "lam": params.lam,
        "q_penalty": params.q_penalty,
        "tau": params.tau,
        "n_q": n_q,
        "k_tau": k_tau,
        "restarts": args.restarts,
        "max_iters": args.max_iters,
        "seed": args.seed,
        "version": __version__,
    }


def cmd_cluster(args) -> int:
    params, n_q, k_tau = _resolve(args)
    timesteps, batches = read_batches(args.input)
    result = run_sequence(
        batches, RunConfig(params, restarts=args.restarts, max_iters=args.max_iters, seed=args.seed)
    )
    write_result(args.output, _header(params, n_q, k_tau, args), result, timesteps)
    if args.csv:
        rows = [
            {"t": t, "index": i, "label": lab}
            for t, step in zip(timesteps, result.steps)
            for i, lab in enumerate(step.labels.tolist())
        ]
        write_csv(args.csv, ["t", "index", "label"], rows)
    if args.timing:
        write_timing(args.timing, timesteps, result.wall_times)
    unconverged = [t for t, s in zip(timesteps, result.steps) if not s.converged]
    if unconverged:
        print(f"warning: no convergence within {args.max_iters} iterations at t={unconverged}", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def _load_pair(result_path, truth_path):
    rt, learned = read_labels(result_path)
    tt, truth = read_labels(truth_path)
    if rt != tt:
        raise FormatError(result_path, None, f"timesteps do not match {truth_path}")
    for t, a, b in zip(rt, learned, truth):
        if len(a) != len(b):
            raise FormatError(result_path, None, f"timestep {t}: {len(a)} labels vs {len(b)} in {truth_path}")
    return rt, learned, truth


def cmd_eval(args) -> int:
    timesteps, learned, truth = _load_pair(args.result, args.truth)
    report = accuracy_report(learned, truth)
    times = None
    if args.timing:
        tt, times = read_timing(args.timing)
        if tt != timesteps:
            raise FormatError(args.timing, None, "timesteps do not match the result file")
    print(f"tracked_accuracy,{report.tracked_accuracy!r}")
    print(f"untracked_accuracy,{report.untracked_accuracy!r}")
    print(f"untracked_step_mean,{report.untracked_step_mean!r}")
    if times is not None:
        summary = summarize_times(times)
        print(f"total_time,{summary.total!r}")
        print(f"mean_time,{summary.mean!r}")
    fields = ["t", "n_points", "tracked", "untracked"] + (["wall_time"] if times is not None else [])
    rows = []
    for j, (t, s) in enumerate(zip(timesteps, report.steps)):
        row = {"t": t, "n_points": s.n_points, "tracked": repr(s.tracked), "untracked": repr(s.untracked)}
        if times is not None:
            row["wall_time"] = repr(float(times[j]))
        rows.append(row)
    print()
    print(",".join(fields))
    for row in rows:
        print(",".join(str(row[f]) for f in fields))
    if args.csv:
        write_csv(args.csv, fields, rows)
    return EXIT_OK


def _sweep_cell(job):
    lam, n_q, k_tau, batches, truth, restarts, max_iters, seeds = job
    params = reparameterize(ReparamConfig(lam, n_q, k_tau))
    tracked, untracked, times, converged = [], [], [], True
    for seed in seeds:
        res = run_sequence(batches, RunConfig(params, restarts=restarts, max_iters=max_iters, seed=seed))
        rep = accuracy_report(res.labels, truth)
        tracked.append(rep.tracked_accuracy)
        untracked.append(rep.untracked_accuracy)
        times.append(float(res.wall_times.mean()) if res.steps else 0.0)
        converged &= res.converged
    return params, tracked, untracked, times, converged


def cmd_sweep(args) -> int:
    _, batches = read_batches(args.input)
    _, truth = read_labels(args.truth)
    if len(truth) != len(batches) or any(len(a) != len(b) for a, b in zip(truth, batches)):
        raise FormatError(args.truth, None, f"does not cover the points of {args.input}")
    grid = [(lam, n_q, k_tau) for lam in args.lam for n_q in args.n_q for k_tau in args.k_tau]
    for lam, n_q, k_tau in grid:
        _reparam(lam, n_q, k_tau)
    seeds = [args.seed + i for i in range(args.trials)]
    jobs = [(lam, n_q, k_tau, batches, truth, args.restarts, args.max_iters, seeds) for lam, n_q, k_tau in grid]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_sweep_cell, jobs))
    else:
        outcomes = [_sweep_cell(job) for job in jobs]

    fields = ["lam", "n_q", "k_tau", "q_penalty", "tau", "trials",
              "tracked_mean", "tracked_std", "untracked_mean", "untracked_std", "converged"]
    rows, timing_rows = [], []
    for (lam, n_q, k_tau), (params, tracked, untracked, times, converged) in zip(grid, outcomes):
        rows.append({
            "lam": lam, "n_q": n_q, "k_tau": k_tau,
            "q_penalty": params.q_penalty, "tau": params.tau, "trials": args.trials,
            "tracked_mean": float(np.mean(tracked)), "tracked_std": float(np.std(tracked)),
            "untracked_mean": float(np.mean(untracked)), "untracked_std": float(np.std(untracked)),
            "converged": converged,
        })
        timing_rows.append({
            "lam": lam, "n_q": n_q, "k_tau": k_tau,
            "time_mean": repr(float(np.mean(times))), "time_std": repr(float(np.std(times))),
        })
    csv_rows = [{k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()} for r in rows]
    if args.output:
        write_jsonl(args.output, rows)
    if args.csv:
        write_csv(args.csv, fields, csv_rows)
    if args.timing:
        write_csv(args.timing, ["lam", "n_q", "k_tau", "time_mean", "time_std"], timing_rows)
    if not args.output and not args.csv:
        print(",".join(fields))
        for r in csv_rows:
            print(",".join(str(r[f]) for f in fields))
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_UNCONVERGED


def cmd_bench(args) -> int:
    params, _, _ = _resolve(args)
    rows = []
    datasets = [
        generate(SynthConfig(n_clusters=args.clusters, n_steps=args.steps, seed=args.seed + i))
        for i in range(args.trials)
    ]
    for restarts in args.restarts_list:
        tracked, untracked, times = [], [], []
        for i, data in enumerate(datasets):
            res = run_sequence(
                data.batches, RunConfig(params, restarts=restarts, max_iters=args.max_iters, seed=args.seed + i)
            )
            rep = accuracy_report(res.labels, data.labels)
            tracked.append(rep.tracked_accuracy)
            untracked.append(rep.untracked_accuracy)
            times.append(float(res.wall_times.mean()))
        rows.append({
            "restarts": restarts,
            "tracked_mean": repr(float(np.mean(tracked))),
            "untracked_mean": repr(float(np.mean(untracked))),
            "time_per_step_mean": repr(float(np.mean(times))),
        })
    fields = ["restarts", "tracked_mean", "untracked_mean", "time_per_step_mean"]
    print(",".join(fields))
    for r in rows:
        print(",".join(str(r[f]) for f in fields))
    if args.csv:
        write_csv(args.csv, fields, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynmeans", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dynmeans {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic moving-Gaussian batch sequence")
    p.add_argument("-o", "--output", required=True, help="batch-sequence file to write")
    p.add_argument("--truth", required=True, help="ground-truth label file to write")
    p.add_argument("--clusters", type=nonneg_int, default=5)
    p.add_argument("--points-per-cluster", type=nonneg_int, default=15)
    p.add_argument("--point-std", type=nonneg_float, default=0.05)
    p.add_argument("--motion-std", type=nonneg_float, default=0.05)
    p.add_argument("--death-prob", type=probability, default=0.05)
    p.add_argument("--steps", type=nonneg_int, default=100)
    p.add_argument("--seed", type=seed_int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("cluster", help="run Dynamic Means over a batch-sequence file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="result file to write")
    _add_param_flags(p)
    _add_run_flags(p)
    p.add_argument("--csv", help="also write per-point labels as CSV")
    p.add_argument("--timing", help="write per-timestep wall times (CSV) here")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval", help="score a result (or truth) file against a truth file")
    p.add_argument("result")
    p.add_argument("truth")
    p.add_argument("--timing", help="timing file written by 'cluster --timing'")
    p.add_argument("--csv", help="write the per-timestep table as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid search over lambda x N_Q x k_tau")
    p.add_argument("input")
    p.add_argument("--truth", required=True)
    _add_param_flags(p, grid=True)
    p.add_argument("--trials", type=positive_int, default=1)
    _add_run_flags(p)
    p.add_argument("--workers", type=positive_int, default=1)
    p.add_argument("-o", "--output", help="write rows as JSON lines")
    p.add_argument("--csv", help="write rows as CSV")
    p.add_argument("--timing", help="write per-cell clustering times (CSV) here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="accuracy and time per step versus number of restarts")
    _add_param_flags(p)
    p.add_argument("--restarts-list", type=int_list, default=[1, 3, 5])
    p.add_argument("--trials", type=positive_int, default=5)
    p.add_argument("--clusters", type=nonneg_int, default=5)
    p.add_argument("--steps", type=nonneg_int, default=100)
    p.add_argument("--max-iters", type=positive_int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--seed", type=seed_int, default=0)
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # flag errors, --help and --version; hand the status back to the caller
        return exc.code
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dynmeans {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"dynmeans {args.command}: malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, ValueError) as exc:
        print(f"dynmeans {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
