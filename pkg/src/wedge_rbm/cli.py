"""Command-line interface.

Subcommands: simulate, hitting, variation, occupancy, submartingale, feller,
scaling, esp-check, theorem-suite.  Common flags: --config, --out, --seed,
--paths, --threads, --format.  The RBM_WEDGE_THREADS environment variable
overrides --threads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ExperimentSpec, load_experiment, load_sim_config
from .errors import ConfigError
from .experiments import export_paths, run_experiment, run_theorem_suite
from .simulator import batch_simulate

_ESTIMATOR_COMMANDS = {
    "hitting": "hitting",
    "variation": "variation",
    "occupancy": "occupancy",
    "submartingale": "submartingale",
    "feller": "feller",
    "scaling": "scaling",
    "esp-check": "esp-check",
    "girsanov": "girsanov",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wedge-rbm",
        description="Constrained Brownian motion in a planar wedge: simulation and checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="key = value config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--paths", type=int, default=None, help="override the path count")
        p.add_argument("--threads", type=int, default=1,
                       help="worker count (RBM_WEDGE_THREADS overrides)")

    p_sim = sub.add_parser("simulate", help="simulate paths and export them")
    common(p_sim)
    p_sim.add_argument("--format", choices=("csv", "jsonl", "bin"), default="csv")

    for cmd in _ESTIMATOR_COMMANDS:
        common(sub.add_parser(cmd, help=f"run the {cmd} experiment"))

    p_suite = sub.add_parser("theorem-suite", help="run the full desk-scale battery")
    common(p_suite, config_required=False)

    return parser


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.paths is not None:
        out["n_paths"] = args.paths
    return out


def _workers(args) -> int:
    env = os.environ.get("RBM_WEDGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"RBM_WEDGE_THREADS={env!r} is not an integer") from exc
    return max(1, args.threads)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        workers = _workers(args)
        if args.command == "theorem-suite":
            return run_theorem_suite(
                args.out, seed=args.seed or 0, paths_cap=args.paths, n_workers=workers
            )
        if args.command == "simulate":
            cfg = load_sim_config(args.config, overrides=_overrides(args))
            paths = batch_simulate(cfg, n_workers=workers)
            target = Path(args.out) / f"paths.{args.format}"
            export_paths(paths, args.format, target)
            print(f"wrote {len(paths)} paths to {target}")
            return 0
        # single-estimator experiment built from the config file
        est_name = _ESTIMATOR_COMMANDS[args.command]
        spec = load_experiment(args.config, overrides=_overrides(args))
        spec = ExperimentSpec(
            name=spec.name,
            sim=spec.sim,
            estimators=(est_name,),
            params={est_name: spec.params.get(est_name, {})},
        )
        spec.validate()
        status = run_experiment(spec, args.out, n_workers=workers)
        print(f"{spec.name}: wrote artifacts to {args.out} (status {status})")
        return status
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
