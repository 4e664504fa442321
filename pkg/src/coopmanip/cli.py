"""Command-line entry point: run scenarios, validate configs, check coverage.

Set COOPMANIP_LOG (e.g. DEBUG, INFO) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from coopmanip.consensus import validate_graph
from coopmanip.scenario import (
    ConfigError,
    coverage_run,
    load_config,
    run_scenario,
    run_trials,
    write_results,
)


def _setup_logging() -> None:
    level = os.environ.get("COOPMANIP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.trials is not None:
        summaries = run_trials(config, args.trials, workers=args.workers)
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "trials_summary.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trial", "agent", "e_m_probe", "e_r_probe", "e_J_final"])
            for s in summaries:
                for i in range(s.errors_probe.shape[0]):
                    writer.writerow(
                        [s.trial, i, repr(float(s.errors_probe[i, 0])),
                         repr(float(s.errors_probe[i, 1])), repr(float(s.errors_final[i, 2]))]
                    )
        med = np.median
        probe = np.stack([s.errors_probe for s in summaries])
        final = np.stack([s.errors_final for s in summaries])
        print(f"{args.trials} trials: median e_m(probe) = {med(probe[..., 0]):.4g}, "
              f"median e_r(probe) = {med(probe[..., 1]):.4g}, "
              f"median e_J(final) = {med(final[..., 2]):.4g}")
        print(f"wrote {path}")
        return 0
    result = run_scenario(config)
    paths = write_results(result, args.out)
    final = result.errors[-1]
    print(f"final errors (median over agents): e_m = {np.median(final[:, 0]):.4g}, "
          f"e_r = {np.median(final[:, 1]):.4g}, e_J = {np.median(final[:, 2]):.4g}")
    for p in paths:
        print(f"wrote {p}")
    if args.plots:
        from coopmanip.report import render_run_report

        for p in render_run_report(args.out):
            print(f"wrote {p}")
    return 0


def _cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"INVALID: {exc}")
        return 1
    violations = validate_graph(config.graph.A, config.graph.alpha)
    if violations:
        for v in violations:
            print(f"INVALID: graph: {v}")
        return 1
    print(f"OK: {config.name}: {config.n_agents} agents, duration {config.duration} s, "
          f"dt {config.dt} s, estimator {config.estimator_rate} Hz")
    return 0


def _cmd_coverage(args) -> int:
    config = load_config(args.config)
    report = coverage_run(config, args.trials, delta=args.delta, workers=args.workers)
    print(f"coverage: {report.covered}/{report.trials} = {report.coverage:.4f} "
          f"(target >= {1.0 - report.delta:.2f}, delta = {report.delta}) "
          f"in {report.wall_time:.1f} s")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "coverage.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trial", "covered", "a4_ok_final", "max_violation"])
            for s in report.summaries:
                writer.writerow([s.trial, int(s.covered), int(s.a4_ok_final),
                                 repr(float(s.max_violation))])
        print(f"wrote {path}")
    return 0 if report.coverage >= 1.0 - report.delta else 2


def _cmd_report(args) -> int:
    from coopmanip.report import render_run_report

    for p in render_run_report(args.run_dir, agent=args.agent):
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopmanip",
        description="Distributed Bayesian estimation for cooperative manipulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write CSV results")
    p_run.add_argument("--config", required=True, help="config path or bundled name")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--trials", type=int, default=None,
                       help="run this many independently seeded trials")
    p_run.add_argument("--workers", type=int, default=None, help="parallel workers for --trials")
    p_run.add_argument("--plots", action="store_true",
                       help="also render report figures next to the CSVs")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a configuration file")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_cov = sub.add_parser("coverage", help="Monte-Carlo check of the error bound")
    p_cov.add_argument("--config", required=True)
    p_cov.add_argument("--trials", type=int, required=True)
    p_cov.add_argument("--delta", type=float, default=None)
    p_cov.add_argument("--workers", type=int, default=None)
    p_cov.add_argument("--out", default=None, help="optional directory for coverage.csv")
    p_cov.set_defaults(func=_cmd_coverage)

    p_rep = sub.add_parser("report", help="render figures from a run directory")
    p_rep.add_argument("--run-dir", required=True)
    p_rep.add_argument("--agent", type=int, default=0, help="agent whose estimates to plot")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
