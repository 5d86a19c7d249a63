"""Command-line driver: ``lbmimo {rates,ber,sweep-streams,sweep-users,selftest,bench}``."""

import argparse
import logging
import sys
from dataclasses import replace

from . import __version__
from .bench import run_bench
from .errors import ConfigurationError, NumericalError
from .experiments import (
    ExperimentSpec,
    emit_results,
    load_spec,
    parse_radius,
    parse_snr_grid,
    run_experiment,
)
from .link import worker_count
from .selftest import run_selftest

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_tuple(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _add_common(p):
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format")
    p.add_argument("--snr", help="SNR grid start:stop:step or comma list, dB")
    p.add_argument("--n-rx", type=int, dest="n_rx", help="receive antennas per user")
    p.add_argument("--n-users", type=int, dest="n_users", help="number of users")
    p.add_argument("--workers", type=int, help="worker threads (default: MIMO_SIM_THREADS or CPU count)")


def build_parser():
    parser = _Parser(prog="lbmimo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for kind in ("rates", "sweep-streams", "sweep-users"):
        p = sub.add_parser(kind, help=f"{kind} experiment")
        _add_common(p)
        p.add_argument("--draws", type=int, help="channel draws per SNR point")
        if kind == "sweep-streams":
            p.add_argument("--streams", type=_int_tuple, help="comma list of streams per user")
        if kind == "sweep-users":
            p.add_argument("--users", type=_int_tuple, help="comma list of user counts")

    p = sub.add_parser("ber", help="Monte Carlo BER curves")
    _add_common(p)
    p.add_argument("--schemes", help="comma list of LB-MU-SM, ZF-MU-SM, ZF-RX, ML-RX")
    p.add_argument("--radius", help="perturbation search radius (integer, or 'inf')")
    p.add_argument("--min-errors", type=int, dest="min_bit_errors")
    p.add_argument("--min-trials", type=int, dest="min_trials")
    p.add_argument("--max-trials", type=int, dest="max_trials")
    p.add_argument("--tail-min-errors", type=int, dest="tail_min_errors",
                   help="end a curve once a point hits --max-trials with fewer errors")

    sub.add_parser("selftest", help="run the invariant suites and smoke-run every config")

    p = sub.add_parser("bench", help="timing of the perturbation search and receivers")
    p.add_argument("--dims", type=_int_tuple, default=(1, 2, 3, 4))
    p.add_argument("--radius", default="2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _spec_from_args(args):
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "format": args.format,
        "n_rx": args.n_rx,
        "n_users": args.n_users,
    }
    if args.snr is not None:
        overrides["snr_db"] = parse_snr_grid(args.snr)
    for key in ("draws", "streams", "users", "min_bit_errors", "min_trials", "max_trials", "tail_min_errors"):
        overrides[key] = getattr(args, key, None)
    if getattr(args, "schemes", None):
        overrides["schemes"] = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    if args.config:
        spec = load_spec(args.config, **overrides)
        if spec.kind != args.command:
            raise ConfigurationError(f"{args.config} describes a {spec.kind!r} experiment, not {args.command!r}")
    else:
        spec = ExperimentSpec(kind=args.command, **{k: v for k, v in overrides.items() if v is not None})
    # applied separately because None (unbounded) is a legitimate override
    if getattr(args, "radius", None) is not None:
        spec = replace(spec, radius=parse_radius(args.radius))
    return spec


def _write(record, fmt, path):
    text = emit_results(record, fmt, path)
    if path is None:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            failed = 0
            for name, ok, detail in run_selftest():
                failed += not ok
                print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
            return EXIT_OK if not failed else EXIT_NUMERICAL
        if args.command == "bench":
            record = run_bench(args.dims, parse_radius(args.radius), args.seed)
            _write(record, args.format, args.out)
            return EXIT_OK
        spec = _spec_from_args(args)
        workers = worker_count(args.workers)
        record = run_experiment(spec, workers=workers)
        _write(record, spec.format, spec.out)
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"lbmimo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"lbmimo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"lbmimo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
