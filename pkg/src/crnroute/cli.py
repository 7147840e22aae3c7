"""Command line entry point: run, sweep, table, trace."""

import argparse
import sys

from .config import PROTOCOLS, ScenarioConfig, parse_config, parse_value
from .errors import ConfigError
from .experiments import SweepSpec, gen_table, report_csv, run_sweep
from .sim import format_trace, simulate


def _load(args, with_protocol=True):
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    else:
        cfg = ScenarioConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if with_protocol and getattr(args, "protocol", None):
        changes["protocol"] = args.protocol
    if changes:
        cfg = cfg.replace(**changes)
    return cfg.validate()


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args):
    cfg = _load(args)
    _emit(report_csv(simulate(cfg).report), args.out)


def cmd_trace(args):
    cfg = _load(args)
    _emit(format_trace(simulate(cfg, trace=True).trace), args.out)


def cmd_sweep(args):
    cfg = _load(args, with_protocol=False)
    try:
        values = [parse_value(args.axis, v.strip()) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc), key=args.axis) from None
    protocols = tuple(args.protocol.split(",")) if args.protocol else PROTOCOLS
    seeds = None
    if args.replications is not None:
        seeds = list(range(cfg.seed, cfg.seed + args.replications))
    spec = SweepSpec(args.axis, values, cfg.replace(protocol=protocols[0]), protocols, seeds)
    _emit(run_sweep(spec, parallel=args.parallel), args.out)


def cmd_table(args):
    if args.samples < 10_000:
        raise ConfigError("must be >= 10000", key="samples")
    text = gen_table(args.max_size, args.max_pus, args.samples, seed=args.seed or 0)
    _emit(text, args.out)


def build_parser():
    parser = argparse.ArgumentParser(prog="crnroute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, protocol=True):
        p.add_argument("--config", metavar="PATH", help="key = value scenario file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", metavar="PATH", help="write here instead of stdout")
        if protocol:
            p.add_argument("--protocol", help=f"one of {', '.join(PROTOCOLS)}")

    p = sub.add_parser("run", help="simulate one scenario, print a CSV row")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("trace", help="simulate one scenario, print the event trace")
    common(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("sweep", help="vary one config field, print CSV")
    common(p, protocol=False)
    p.add_argument("--axis", required=True, help="ScenarioConfig field to vary")
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--protocol", help="comma separated subset of protocols (default all)")
    p.add_argument("--replications", type=int, help="seeds per point (default from config)")
    p.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("table", help="regenerate the group-size threshold table")
    p.add_argument("--max-size", type=int, default=10)
    p.add_argument("--max-pus", type=int, default=3)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report, do not dump a traceback
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
