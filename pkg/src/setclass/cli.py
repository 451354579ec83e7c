"""
Command-line front end.

    setclass simulate --model 2 --p 20 --N 10 --seed 7 --out data/
    setclass train --data data/ --out model.json
    setclass predict --model model.json --data test/ --score
    setclass bench --model 2 --p 20 --N 10 --reps 50 --seed 3

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classify import RULES
from .exceptions import SetClassError
from .pipeline import TrainConfig, load_model, predict, save_model, train
from .selection import STATISTICS
from .setdata import FORMATS, load_collection, save_collection
from .simulate import ALIASES, METHODS, SimulationConfig, generate_dataset, run_benchmark

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid flag combination or configuration value."""


def _add_sim_args(p):
    p.add_argument("--model", type=int, required=True, choices=(1, 2, 3, 4), help="covariance model")
    p.add_argument("--p", type=int, required=True, help="dimension")
    p.add_argument("--N", type=int, required=True, help="number of sets (even)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--m-wishart", type=int, default=10)
    p.add_argument("--kappa", type=float, default=100.0)
    p.add_argument("--n-test", type=int, default=None, help="test sets per replication (default N)")


def _add_train_args(p):
    p.add_argument("--classifier", choices=RULES, default="lda")
    p.add_argument("--gamma", type=float, default=TrainConfig.gamma)
    p.add_argument("--B", type=int, default=1000, help="permutations")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--statistic", choices=STATISTICS, default="T")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--relative-tau", action="store_true", help="tau is a multiple of trace(S)")
    p.add_argument("--r", type=int, default=None, help="fixed subspace dimension (skips selection)")
    p.add_argument("--R", type=int, default=None, help="largest dimension searched")
    p.add_argument("--scale-c", type=float, default=None, help="fixed scale constant")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setclass", description="Set classification with PC-subspace features.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated collection")
    _add_sim_args(p)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--format", choices=FORMATS, default="csv-dir")
    p.add_argument("--out", required=True, help="output directory (csv-dir) or file (json)")
    p.add_argument("--test-out", default=None, help="also write the matching test collection here")

    p = sub.add_parser("train", help="fit a set classifier and write model JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=FORMATS, default="csv-dir")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="permutation-test seed")
    _add_train_args(p)

    p = sub.add_parser("predict", help="label new sets with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=FORMATS, default="csv-dir")
    p.add_argument("--out", default=None, help="labels CSV (default stdout)")
    p.add_argument("--score", action="store_true", help="report the error rate against stored labels")
    p.add_argument("--pad-small", action="store_true", help="accept sets with fewer than r_hat + 1 observations")

    p = sub.add_parser("bench", help="Monte Carlo benchmark of all methods")
    _add_sim_args(p)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", default=None, help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: SETCLASS_THREADS or CPU count)")
    p.add_argument("--out", default=None, help="report CSV (default stdout)")
    p.add_argument("--table", action="store_true", help="also print a readable table to stderr")
    _add_train_args(p)
    return parser


def _sim_config(args, replications=1) -> SimulationConfig:
    try:
        return SimulationConfig(
            model=args.model, p=args.p, N=args.N, delta=args.delta, sigma=args.sigma, rho=args.rho,
            m_wishart=args.m_wishart, kappa=args.kappa, seed=args.seed, replications=replications,
            n_test=args.n_test,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _train_config(args, seed) -> TrainConfig:
    try:
        return TrainConfig(
            classifier=args.classifier, gamma=args.gamma, B=args.B, alpha=args.alpha,
            statistic=args.statistic, tau=args.tau, relative_tau=args.relative_tau, r=args.r, R=args.R,
            seed=seed, scale_c=args.scale_c,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _threads(arg) -> int:
    if arg is not None:
        n = arg
    elif os.environ.get("SETCLASS_THREADS"):
        try:
            n = int(os.environ["SETCLASS_THREADS"])
        except ValueError:
            raise UsageError(f"SETCLASS_THREADS must be an integer, got {os.environ['SETCLASS_THREADS']!r}") from None
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise UsageError(f"thread count must be positive, got {n}")
    return n


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    if args.replication < 0:
        raise UsageError("--replication must be nonnegative")
    train_set, test_set = generate_dataset(cfg, args.replication)
    save_collection(train_set, args.out, args.format)
    if args.test_out:
        save_collection(test_set, args.test_out, args.format)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _train_config(args, args.seed)
    coll = load_collection(args.data, args.format)
    model = train(coll, cfg)
    save_model(model, args.out)
    p_value = "n/a" if model.p_value is None else f"{model.p_value:.4g}"
    print(f"r_hat={model.r_hat} p_value={p_value} layout={model.feature_layout}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    coll = load_collection(args.data, args.format)
    labels = [predict(model, s, args.pad_small) for s in coll.sets]
    buf = io.StringIO()
    buf.write(f"# config: {json.dumps({'model': str(args.model), 'data': str(args.data), 'format': args.format}, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set_id", "predicted"] + (["label"] if args.score else []))
    for s, lab in zip(coll.sets, labels):
        w.writerow([s.set_id, lab] + ([s.label if s.label is not None else ""] if args.score else []))
    _emit(buf.getvalue(), args.out)
    if args.score:
        known = [(lab, s.label) for s, lab in zip(coll.sets, labels) if s.label is not None]
        if not known:
            raise SetClassError("--score needs labeled sets")
        wrong = sum(a != b for a, b in known)
        stream = sys.stdout if args.out else sys.stderr
        print(f"error: {100.0 * wrong / len(known):.2f}% ({wrong}/{len(known)})", file=stream)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    cfg = _sim_config(args, args.reps)
    tc = _train_config(args, args.seed)
    methods = None
    if args.methods:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        bad = [m for m in methods if m not in METHODS and m not in ALIASES]
        if bad:
            raise UsageError(f"unknown method(s) {bad}; expected from {list(METHODS) + list(ALIASES)}")
    report = run_benchmark(cfg, methods, tc, _threads(args.threads))
    _emit(report.to_csv(), args.out)
    if args.table:
        print(report.to_table(), file=sys.stderr)
    for m, fails in report.failures.items():
        for f in fails:
            print(f"warning: {m} {f}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"setclass {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SetClassError, OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"setclass {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
