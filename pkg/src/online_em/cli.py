"""Command-line entry point: ``online-em {simulate,fit,experiment,asymptotics}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, simgen
from .core import DomainError, InsufficientDataError

log = logging.getLogger("online_em")

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="online-em", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "write one replica's dataset as CSV"),
        ("fit", "single run; prints final and averaged parameters"),
        ("experiment", "replication study; writes results, summary and metadata CSVs"),
        ("asymptotics", "asymptotic covariance report at the true parameters"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="key = value config file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes (output does not depend on it)")
        p.add_argument("--seed", type=int, default=None, help="overrides base_seed")
    return parser


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
        harness.validate_config(cfg)
    if args.threads < 1:
        raise harness.ConfigError("--threads: must be >= 1")
    return cfg


def _out_dir(args, cfg) -> Path:
    out = args.out if args.out is not None else Path(cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, cfg) -> int:
    out = _out_dir(args, cfg)
    data, classes = harness.generate_replica(cfg, cfg.replica)
    path = out / "dataset.csv"
    if cfg.model == "poisson":
        simgen.dump_poisson_csv(path, data, classes)
    else:
        simgen.dump_regmix_csv(path, data, classes)
    print(path)
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    labels = cfg.model_spec().param_labels
    final, averaged, res = harness.fit_single(cfg)
    if res is not None and res.failed_step[0]:
        print(f"run failed at step {res.failed_step[0]}: {res.failures[0]}", file=sys.stderr)
        return EXIT_FAILURES
    print("final:    " + ", ".join(f"{k}={v:.6g}" for k, v in zip(labels, final)))
    if averaged is not None:
        print("averaged: " + ", ".join(f"{k}={v:.6g}" for k, v in zip(labels, averaged)))
    if res is not None and res.trajectory is not None:
        path = _out_dir(args, cfg) / "trajectory.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "gamma"] + list(labels))
            for rec in res.trajectory.steps:
                w.writerow([rec.n, repr(rec.gamma)] + [repr(float(x)) for x in rec.theta[0]])
        print(path)
    return EXIT_OK


def cmd_experiment(args, cfg) -> int:
    outcome = harness.run_experiment(cfg, _out_dir(args, cfg), threads=args.threads)
    print(outcome.results_path)
    print(outcome.summary_path)
    print(outcome.metadata_path)
    rate = outcome.failure_rate
    if rate > cfg.max_failure_rate:
        print(f"failure rate {rate:.3f} exceeds max_failure_rate {cfg.max_failure_rate}", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_asymptotics(args, cfg) -> int:
    report = harness.asymptotics_report(cfg)
    path = _out_dir(args, cfg) / "asymptotics.csv"
    report.to_csv(path)
    with np.printoptions(precision=4, suppress=True):
        print("std devs (averaged iterates):", report.std_devs)
        for name, (_, sd, corr) in report.extra_blocks.items():
            print(f"{name} std devs:", sd)
            print(f"{name} correlations:\n{corr}")
    print(path)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "experiment": cmd_experiment,
            "asymptotics": cmd_asymptotics}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, cfg)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, InsufficientDataError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
