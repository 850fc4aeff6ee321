"""Command-line entry point: ``lieprop {simulate,propagate,compare,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from lieprop.harness import (
    ExperimentConfig,
    emit_results,
    reference_from_dump,
    run_ground_truth,
    run_methods,
    time_methods,
    write_config,
    write_timings_csv,
)

DUMP_NAME = "ensemble.bin"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with experiment settings")
    p.add_argument("--traj", type=int, choices=(1, 2), help="reference trajectory")
    p.add_argument("--samples", type=int, help="number of Monte-Carlo trajectories")
    p.add_argument("--seed", type=int, help="base seed of the per-trajectory streams")
    p.add_argument("--methods", help="comma-separated subset of UKF-LA,EMD0,EMD2,UTD")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lieprop",
        description="Mean/covariance propagation benchmark for the stochastic rigid body on SO(3) x R^3.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate the Monte-Carlo ensemble only")
    _common(p)

    p = sub.add_parser("propagate", help="run propagators against a dumped ensemble")
    _common(p)
    p.add_argument("--ensemble", type=Path, help=f"ensemble dump (default: OUT/{DUMP_NAME})")

    p = sub.add_parser("compare", help="ensemble + propagators + metrics + plots")
    _common(p)
    p.add_argument("--no-plots", action="store_true", help="skip SVG output")

    p = sub.add_parser("bench", help="time the propagators")
    _common(p)
    p.add_argument("--repeats", type=int, default=5, help="interleaved repetitions (minimum is reported)")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.command == "propagate" and args.config is None:
        # reuse the settings that produced the ensemble, if they were saved next to it
        dump = args.ensemble if args.ensemble is not None else (args.out or Path("results")) / DUMP_NAME
        saved = Path(dump).parent / "config.json"
        if saved.exists():
            with open(saved) as fh:
                data = json.load(fh)
    if args.config is not None:
        with open(args.config) as fh:
            data = json.load(fh)
    overrides = {
        "trajectory": args.traj,
        "n_samples": args.samples,
        "base_seed": args.seed,
        "methods": args.methods,
        "output_dir": str(args.out) if args.out is not None else None,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def _summary(stats) -> dict:
    return {
        "t": stats.times,
        "mean_R": stats.mean_R,
        "mean_l": stats.mean_l,
        "cov": stats.cov,
        "n": np.array(stats.n),
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"lieprop: invalid configuration: {exc}", file=sys.stderr)
        return 2
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        if args.command == "simulate":
            stats = run_ground_truth(config, out / DUMP_NAME)
            np.savez(out / "ensemble_stats.npz", **_summary(stats))
            write_config(out / "config.json", config)
            print(f"wrote {out / DUMP_NAME} ({config.n_samples} samples, {len(stats)} checkpoints)")
        elif args.command == "propagate":
            dump = args.ensemble if args.ensemble is not None else out / DUMP_NAME
            reference = reference_from_dump(config, dump)
            table = run_methods(config, reference)
            emit_results(table, out)
            _print_table(table)
        elif args.command == "compare":
            table = run_methods(config, run_ground_truth(config))
            emit_results(table, out, plots=not args.no_plots)
            _print_table(table)
        elif args.command == "bench":
            timings = time_methods(config, args.repeats)
            write_timings_csv(out / "timings.csv", timings)
            write_config(out / "config.json", config)
            for name, sec in timings.items():
                print(f"{name:7s} {sec:.4f} s")
    except Exception as exc:
        print(f"lieprop {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


def _print_table(table) -> None:
    print(f"{'method':7s} {'e_R(T)':>11s} {'e_l(T)':>11s} {'e_Sigma(T)':>11s} {'seconds':>8s}")
    for name, r in table.methods.items():
        print(f"{name:7s} {r.e_R[-1]:11.4e} {r.e_l[-1]:11.4e} {r.e_Sigma[-1]:11.4e} {r.seconds:8.3f}")


if __name__ == "__main__":
    sys.exit(main())
