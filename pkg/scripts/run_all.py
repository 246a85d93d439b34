"""Run every experiment config in scripts/configs and write reports to results/.

Usage: python scripts/run_all.py [--only NAME ...] [--out DIR] [--jobs N] [--svg]
"""

import argparse
import sys
import time
from pathlib import Path

from mitbag.experiments import ExperimentError, load_config, run_experiment, write_report

HERE = Path(__file__).resolve().parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", nargs="*", default=None, help="config names without .toml")
    ap.add_argument("--out", default="results")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--svg", action="store_true")
    args = ap.parse_args(argv)

    paths = sorted((HERE / "configs").glob("*.toml"))
    if args.only:
        paths = [p for p in paths if p.stem in args.only]
    failed = 0
    for path in paths:
        cfg = load_config(path).replace(jobs=args.jobs)
        t = time.perf_counter()
        try:
            report = run_experiment(cfg)
        except ExperimentError as exc:
            report, failed = exc.report, failed + 1
        out = write_report(report, Path(args.out) / path.stem, svg=args.svg)
        print(f"{path.stem:24s} {report.status:7s} {time.perf_counter() - t:7.1f}s  {out['json']}", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
