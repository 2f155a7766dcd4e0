"""
Command line entry point.

    thp-noma rate-sweep   --config cfg.json --seed 0 --trials 20 --out rates.csv
    thp-noma eta-sweep    --config cfg.json --out region.csv
    thp-noma symbol-check --trials 5

Flags override values from the JSON configuration file. Log verbosity is
read from ``THP_NOMA_LOG_LEVEL`` (default ``WARNING``).
"""

import argparse
import logging
import os
import sys

from .errors import ConfigurationError
from .harness import (
    RATE_COLUMNS,
    SYMBOL_COLUMNS,
    ExperimentConfig,
    run_eta_sweep,
    run_rate_sweep,
    run_symbol_check,
    summarize,
    write_csv,
)

LOG_ENV = "THP_NOMA_LOG_LEVEL"


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _methods(text):
    return [m.strip() for m in text.split(",") if m.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="thp-noma", description="THP-aided clustered NOMA experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="base seed; trial t uses seed + t")
    common.add_argument("--trials", type=int, help="number of channel draws")
    common.add_argument("--out", help="output CSV (default: stdout)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--no-timing", action="store_true", help="leave wall_time empty for byte-identical output")
    for name, helptext in (
        ("rate-sweep", "sum rates versus SNR"),
        ("eta-sweep", "strong/weak rate pairs versus eta"),
        ("symbol-check", "noiseless end-to-end symbol simulation"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "rate-sweep":
            p.add_argument("--snr", type=_floats, help="comma-separated SNR points in dB")
            p.add_argument("--methods", type=_methods, help="comma-separated methods")
        elif name == "eta-sweep":
            p.add_argument("--eta", type=_floats, help="comma-separated eta values")
            p.add_argument("--snr", type=float, help="fixed SNR in dB")
            p.add_argument("--methods", type=_methods, help="comma-separated methods")
        else:
            p.add_argument("--frames", type=int, help="frames per trial")
            p.add_argument("--method", help="thp-greedy or thp-joint")
            p.add_argument("--snr", type=float, help="add noise at this SNR (dB); noiseless if omitted")
    return parser


def _config(args):
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    extra = {}
    if args.command == "rate-sweep":
        extra = {"snr_db": args.snr, "methods": args.methods}
    elif args.command == "eta-sweep":
        extra = {"eta_values": args.eta, "eta_snr_db": args.snr, "eta_methods": args.methods}
    else:
        extra = {"frames": args.frames, "symbol_method": args.method, "symbol_snr_db": args.snr}
    return config.override(
        seed=args.seed, trials=args.trials, out=args.out, workers=args.workers,
        timing=False if args.no_timing else None, **extra,
    )


def _emit(rows, columns, out):
    if out:
        with open(out, "w", newline="") as fh:
            write_csv(rows, fh, columns)
    else:
        write_csv(rows, sys.stdout, columns)


def main(argv=None):
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        if args.command == "rate-sweep":
            rows = run_rate_sweep(config)
            columns = RATE_COLUMNS
        elif args.command == "eta-sweep":
            rows = run_eta_sweep(config)
            columns = RATE_COLUMNS
        else:
            rows = run_symbol_check(config)
            columns = SYMBOL_COLUMNS
        _emit(rows, columns, config.out)
    except (ConfigurationError, OSError) as exc:
        print(f"thp-noma: error: {exc}", file=sys.stderr)
        return 2
    if config.out:
        if args.command == "symbol-check":
            for r in rows:
                print(f"trial {r.trial}: strong errors {r.strong_errors}, weak errors {r.weak_errors}, "
                      f"max fold error {r.max_fold_error:.2e} [{r.status}]", file=sys.stderr)
        else:
            for (method, value), (rs, rw, rt) in summarize(rows).items():
                print(f"{method:12s} {value:6g}  strong {rs:7.3f}  weak {rw:7.3f}  total {rt:7.3f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
