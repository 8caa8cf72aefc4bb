"""
Command-line interface.

Subcommands:
    run      one static experiment
    matrix   every scenario x environment x policy combination
    dynamic  one continuous run over the daily profile schedule
    oracle   value iteration on a tiny instance, optionally against a DQN
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
from collections.abc import Sequence
from pathlib import Path

from app import create_runtime
from app.config import POLICIES, Config, ExperimentConfig, load_experiment_config
from app.errors import SlicingError
from app.services.experiment import run_dynamic, run_experiment, run_matrix, run_oracle
from app.services.storage import ResultStore

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML experiment config")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--horizon", type=int, help="decision steps T")
    parser.add_argument("--output-dir", type=Path, help="directory for CSV and snapshots")
    parser.add_argument("--policy", choices=POLICIES, help="controller")
    parser.add_argument("--scenario", type=int, choices=(1, 2, 3), help="reward scenario")
    parser.add_argument("--environment", help="traffic profile id, e.g. E3")
    parser.add_argument("--window-size", type=int, help="steps per KPI window row")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fog-slicing",
        description="Fog-node network slicing simulator with a DQN edge controller.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("run", help="run one experiment"))

    matrix = sub.add_parser("matrix", help="run the scenario x environment x policy matrix")
    _add_common(matrix)
    matrix.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    dynamic = sub.add_parser("dynamic", help="run across the daily profile schedule")
    _add_common(dynamic)
    dynamic.add_argument(
        "--adaptation", choices=("online", "policy_bank", "none"), help="drift response"
    )
    dynamic.add_argument("--steps-per-sample", type=int, help="steps per schedule sample")

    oracle = sub.add_parser("oracle", help="solve a tiny instance by value iteration")
    _add_common(oracle)
    oracle.add_argument("--gamma", type=float, help="discount factor (default: agent gamma)")
    oracle.add_argument(
        "--compare-steps",
        type=int,
        default=0,
        help="train a DQN for --horizon steps and evaluate both for this many steps",
    )
    return parser


def _experiment_config(args: argparse.Namespace, runtime: Config) -> ExperimentConfig:
    config = load_experiment_config(
        args.config,
        seed=args.seed,
        horizon=args.horizon,
        output_dir=args.output_dir,
        policy=args.policy,
        scenario=args.scenario,
        environment=args.environment,
        window_size=args.window_size,
        steps_per_sample=getattr(args, "steps_per_sample", None),
        strict=runtime.strict or None,
    )
    if args.output_dir is None and config.output_dir == ExperimentConfig().output_dir:
        config = config.with_overrides(output_dir=runtime.results_dir)
    adaptation = getattr(args, "adaptation", None)
    if adaptation is not None:
        config = config.with_overrides(
            adaptation=dataclasses.replace(config.adaptation, mode=adaptation)
        )
    return config


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        runtime = create_runtime()
        config = _experiment_config(args, runtime.config)
    except (SlicingError, ValueError) as exc:
        logger.error(f"Invalid configuration: {exc}")
        return 2

    try:
        if args.command == "run":
            record = run_experiment(config)
            print(f"{record.csv_path}")
        elif args.command == "matrix":
            result = run_matrix(config, workers=args.workers)
            print(f"{result.summary_path}")
            if result.failures:
                return 1
        elif args.command == "dynamic":
            record = run_dynamic(config)
            print(f"{record.csv_path}")
        else:
            report = run_oracle(
                config,
                ResultStore(config.output_dir),
                compare_steps=args.compare_steps,
                gamma=args.gamma,
            )
            print(f"{report.table_path}")
            if report.relative_gap is not None:
                print(f"relative gap: {report.relative_gap:.6f}")
    except SlicingError as exc:
        logger.error(f"{args.command} failed: {exc}")
        return 1
    return 0
