"""Command-line workbench.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 on runtime
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import experiments
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .demo import bias_showcase, demo_gmm, write_demo

log = logging.getLogger("uniattr")

COMMANDS = ("train", "attribute", "evaluate", "attack", "demo-gmm", "bias-showcase", "riemann-study")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uniattr", description="Unlearning-based path attribution workbench.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="ExperimentConfig JSON file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the config output directory")
        if name == "bias-showcase":
            p.add_argument("--samples", type=int, default=8)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    return dataclasses.replace(cfg, **changes).validate() if changes else cfg


def _dispatch(command: str, cfg: ExperimentConfig, samples: int = 8) -> None:
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    if command == "train":
        experiments.run_train(cfg)
    elif command == "attribute":
        experiments.run_attribute(cfg)
    elif command == "evaluate":
        experiments.run_evaluate(cfg)
    elif command == "attack":
        experiments.run_attack(cfg)
    elif command == "riemann-study":
        experiments.run_riemann_study(cfg)
    elif command == "demo-gmm":
        write_demo(demo_gmm(cfg), out)
    elif command == "bias-showcase":
        bias_showcase(cfg, samples)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "uniattr: error: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        cfg = _config(args)
        if args.command == "evaluate" and not cfg.methods:
            raise ConfigError("no methods selected")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"uniattr: config error: {exc}", file=sys.stderr)
        return 1
    try:
        _dispatch(args.command, cfg, getattr(args, "samples", 8))
    except Exception as exc:  # reported, not re-raised: the exit code carries the failure
        print(f"uniattr {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
