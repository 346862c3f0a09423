"""Command-line interface.

``stripfold train|baseline|sweep|evaluate|trace|render-check`` with
``--config <file>``, ``--seed <n>``, ``--out <dir>`` plus a few per-command
overrides. Exit code 0 only if every acceptance-tagged check in the run
passes.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import EXPERIMENT_KINDS, ExperimentConfig, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stripfold",
        description="Fabric-strip folding lab: training, baselines, sweeps, "
                    "closed-loop evaluation, and figure-data regeneration.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", help="experiment config file")
        sp.add_argument("--seed", type=int, help="run seed")
        sp.add_argument("--out", help="output directory")
        if kind in ("evaluate", "trace"):
            sp.add_argument("--weights", help="trained policy weights file")
        if kind == "evaluate":
            sp.add_argument("--samples", type=int,
                            help="held-out material draws")
        if kind == "train":
            sp.add_argument("--generations", type=int)
            sp.add_argument("--popsize", type=int)
            sp.add_argument("--workers", type=int)
        if kind == "trace":
            sp.add_argument("--stiffness", type=float)
            sp.add_argument("--damping", type=float)
        if kind == "render-check":
            sp.add_argument("--states", type=int, help="ensemble size")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        config = ExperimentConfig()
    config = replace(config, kind=args.kind)

    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    if getattr(args, "weights", None) is not None:
        config = replace(config, weights_file=args.weights)
    if getattr(args, "samples", None) is not None:
        config = replace(config, n_samples=args.samples)
    if getattr(args, "states", None) is not None:
        config = replace(config, n_states=args.states)
    if getattr(args, "stiffness", None) is not None:
        config = replace(config, trace_stiffness=args.stiffness)
    if getattr(args, "damping", None) is not None:
        config = replace(config, trace_damping=args.damping)
    trainer = config.trainer
    if getattr(args, "generations", None) is not None:
        trainer = replace(trainer, generations=args.generations)
    if getattr(args, "popsize", None) is not None:
        trainer = replace(trainer, popsize=args.popsize)
    if getattr(args, "workers", None) is not None:
        trainer = replace(trainer, n_workers=args.workers)
    if trainer is not config.trainer:
        config = replace(config, trainer=trainer)

    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
