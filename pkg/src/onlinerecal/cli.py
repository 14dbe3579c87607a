"""Command-line entry point: ``onlinerecal run`` and ``onlinerecal recalibrate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, DataError, DomainError
from .harness import (Experiment, format_summary, make_config, parse_config_file,
                      recalibrate_csv, run_experiment)

EXIT_CONFIG = 2
EXIT_DATA = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--M", type=int, help="number of forecast buckets")
    p.add_argument("--N", type=int, help="grid resolution of each calibrator")
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", help="l2, log, misclass, l1 or hinge")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onlinerecal",
                                     description="Online recalibration of probability forecasts.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a synthetic experiment or a csv stream")
    run.add_argument("--config", help="key=value config file; flags override it")
    run.add_argument("--experiment", choices=[e.value for e in Experiment])
    run.add_argument("--T", type=int, help="number of steps")
    run.add_argument("--report-every", dest="report_every", type=int)
    run.add_argument("--curve-out", dest="curve_out", help="calibration curve CSV path")
    run.add_argument("--input", help="input CSV for --experiment csv")
    _common(run)

    rc = sub.add_parser("recalibrate", help="add a p_cal column to a p_f,y CSV")
    rc.add_argument("--input", required=True)
    _common(rc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            file_values = parse_config_file(args.config) if args.config else {}
            cfg = make_config(file_values, experiment=args.experiment, T=args.T, M=args.M,
                              N=args.N, loss=args.loss, seed=args.seed,
                              report_every=args.report_every, out=args.out,
                              curve_out=args.curve_out, input=args.input)
            summary = run_experiment(cfg).summary
        else:
            if not args.out:
                raise ConfigError("recalibrate needs --out")
            M = 10 if args.M is None else args.M
            summary = recalibrate_csv(args.input, args.out, M=M, N=args.N,
                                      seed=0 if args.seed is None else args.seed,
                                      loss=args.loss or "l2")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    print(format_summary(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
