"""Command-line entry point: ``midlab <subcommand> --config run.cfg``.

Exit codes: 0 success, 1 verification failure, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from ..domains import dataset_from_csv
from ..errors import ConfigError
from .config import load_config
from .experiments import run_experiment
from .svg import emit_scatter_svg

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

SUBCOMMANDS = {
    "train": "gan_train",
    "centroid": "oracle_centroid",
    "verify": "verify_identity",
    "adapt": "adaptation",
    "agnostic": "agnosticism",
    "gradcheck": "gradcheck",
}


def _seed_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="midlab", description="MiddleGAN desk-scale laboratory")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=_seed_list, help="comma-separated seeds (override the config)")
        p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                       help="reject unknown sections and keys (default on)")
    p = sub.add_parser("plot", help="scatter-plot dataset CSV files to SVG")
    p.add_argument("csv", nargs="+", help="dataset CSV files (x0,x1,label,domain)")
    p.add_argument("--out", required=True, help="SVG path")
    return parser


def _plot(args) -> int:
    datasets = []
    for path in args.csv:
        with open(path, encoding="utf-8") as fh:
            datasets.append(dataset_from_csv(fh.read()))
    styles = [{"label": f"{d.domain}: {os.path.basename(p)}"} for d, p in zip(datasets, args.csv)]
    emit_scatter_svg(datasets, args.out, styles)
    print(args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "plot":
            return _plot(args)
        cfg = load_config(args.config, strict=args.strict)
        kind = SUBCOMMANDS[args.command]
        if cfg.kind != kind:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r} ({kind})")
        if args.seed is not None:
            cfg = cfg.with_seeds(args.seed)
        if args.out is not None:
            cfg = cfg.with_output_dir(args.out)
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure maps to exit 3
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"report": os.path.join(cfg.output_dir, "report.json"),
                      "passed": report.passed, "aggregate": report.aggregate}, indent=2))
    return EXIT_OK if report.passed else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
