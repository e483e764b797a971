"""uqnav command line: dataset generation, training, evaluation, tables.

Exit codes: 0 success, 1 usage/config error, 2 missing or unreadable
artifact, 3 trend-verdict failure in reproduce-table.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import harness
from .checkpoint import CheckpointError
from .dataset import DatasetError
from .harness import ArtifactMissingError, ConfigError, RunConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MISSING = 2
EXIT_VERDICT = 3

DEFAULT_OUT = "uqnav_out"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract reserves 2
    # for missing artifacts, so usage problems remap to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand parsing from clobbering flags given before
    # the subcommand name; either position works.
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, metavar="PATH",
                   help="JSON run configuration (defaults mirror RunConfig)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="override the run seed")
    p.add_argument("--out", default=argparse.SUPPRESS, metavar="DIR",
                   help=f"artifact directory (default {DEFAULT_OUT})")
    return p


_COMMANDS = (
    ("gen-data", "generate the cm-vae and policy training datasets"),
    ("train-cmvae", "train the perception model on the cm-vae dataset"),
    ("train-policy", "train the heteroscedastic policy ensemble"),
    ("train-baseline", "train the deterministic baseline policy"),
    ("evaluate", "run the closed-loop evaluation grid and write results.csv"),
    ("reproduce-table", "emit the gates-traversed table and trend verdict"),
)


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="uqnav", parents=[common],
                     description="Uncertainty-aware gate navigation pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, help_text in _COMMANDS:
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "reproduce-table":
            p.add_argument("--full", action="store_true",
                           help="run the whole pipeline (data, training) first")
    return parser


def _resolve(args) -> tuple:
    config_path = getattr(args, "config", None)
    config = harness.load_config(config_path) if config_path else RunConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config, Path(getattr(args, "out", None) or DEFAULT_OUT)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        config, out = _resolve(args)
        if args.command == "gen-data":
            harness.stage_gen_data(config, out)
        elif args.command == "train-cmvae":
            harness.stage_train_cmvae(config, out)
        elif args.command == "train-policy":
            harness.stage_train_policy(config, out)
        elif args.command == "train-baseline":
            harness.stage_train_baseline(config, out)
        elif args.command == "evaluate":
            harness.stage_evaluate(config, out)
        elif args.command == "reproduce-table":
            return harness.reproduce_table(config, out, full=args.full)
        return EXIT_OK
    except ConfigError as exc:
        print(f"uqnav: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactMissingError as exc:
        print(f"uqnav: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DatasetError, CheckpointError) as exc:
        print(f"uqnav: unreadable artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
