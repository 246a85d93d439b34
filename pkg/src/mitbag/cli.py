"""Command line entry point: ``mitbag <experiment> [--config FILE] [--out PATH] ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from mitbag.experiments.config import KINDS, ConfigError, ExperimentConfig, load_config, toml_reader
from mitbag.experiments.report import write_report
from mitbag.experiments.runs import ExperimentError, run_experiment

log = logging.getLogger("mitbag")


def _override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    try:
        parsed = toml_reader.loads(f"v = {value}")["v"]
    except Exception:
        parsed = value
    return key.strip(), parsed


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # the subcommand copies must not reset flags given before the subcommand
    d = (lambda value: argparse.SUPPRESS) if suppress else (lambda value: value)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=d(None), help="TOML experiment config")
    common.add_argument("--out", type=Path, default=d(None), help="output path stem (writes .json and .csv)")
    common.add_argument("--jobs", type=int, default=d(None), help="worker processes for sweep points")
    common.add_argument("--seed", type=int, default=d(None), help="seed for randomized starts and samplers")
    common.add_argument("--svg", action="store_true", default=d(False), help="also write an SVG convergence plot")
    common.add_argument("--set", dest="sub_overrides" if suppress else "overrides", action="append",
                        type=_override, default=[],
                        metavar="KEY=VALUE", help="override a config field (TOML value syntax)")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mitbag", description=__doc__, parents=[_common_flags(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[_common_flags(True)], help=f"run the {kind} experiment")
    return parser


def make_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(f"config is for {cfg.kind!r}, not {args.command!r}")
        data = cfg.to_dict()
    else:
        data = {"kind": args.command}
    for key, value in [*args.overrides, *getattr(args, "sub_overrides", [])]:
        data[key] = value
    if args.jobs is not None:
        data["jobs"] = args.jobs
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = str(args.out)
    if args.svg:
        data["svg"] = True
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = make_config(args)
    except (ConfigError, OSError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = cfg.out or f"results/{cfg.kind}"
    code = 0
    try:
        report = run_experiment(cfg)
    except ExperimentError as exc:
        if exc.report is None:
            raise
        report, code = exc.report, 1
        print(f"FAILED: {exc}", file=sys.stderr)
    paths = write_report(report, out, svg=cfg.svg)
    print(f"{cfg.kind}: status={report.status} -> {paths['json']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
