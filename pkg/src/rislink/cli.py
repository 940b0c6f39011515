"""Batch simulation CLI.

    sim run   --config desk.toml --out out.csv [--format csv|jsonl]
              [--override frame.m=64 ...] [--workers N] [--seed U64] [--timing]
    sim sweep --config desk.toml --axis snr=0:2:20 [--axis estimator=proposed,bem]
              --out out.csv ...
    sim validate-config --config desk.toml

Axis values are either comma lists (``estimator=proposed,bem``) or inclusive
``start:step:stop`` ranges (``snr=0:2:20``). Exit codes: 0 success, 2 config
error, 3 runtime failure. ``SIM_WORKERS`` sets the default worker count.
"""

import argparse
import sys

from .harness import (ConfigError, apply_override, default_workers, emit_results,
                      load_config, run_point, run_sweep)


def _parse_axis(text: str):
    name, _, values = text.partition("=")
    if not values:
        raise ConfigError(f"axis {text!r} has no values")
    if ":" in values:
        start, step, stop = (float(v) for v in values.split(":"))
        if step <= 0:
            raise ConfigError(f"axis {text!r} needs a positive step")
        count = int(round((stop - start) / step)) + 1
        return name, [start + i * step for i in range(count) if start + i * step <= stop + 1e-9]
    return name, values.split(",")


def _load(args):
    cfg = load_config(args.config)
    for item in args.override or []:
        key, _, value = item.partition("=")
        cfg = apply_override(cfg, key, value)
    if args.seed is not None:
        cfg = apply_override(cfg, "base_seed", str(args.seed))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sim",
                                     description="RIS-aided OTFS/OFDM link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True, help="TOML or JSON config file")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="config override, e.g. frame.m=64")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        if needs_out:
            p.add_argument("--out", required=True, help="output file path")
            p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
            p.add_argument("--workers", type=int, default=None)
            p.add_argument("--timing", action="store_true",
                           help="include wall_time_s in the output")

    run_p = sub.add_parser("run", help="run the configured point")
    common(run_p)
    sweep_p = sub.add_parser("sweep", help="run a sweep over one or more axes")
    common(sweep_p)
    sweep_p.add_argument("--axis", action="append", required=True,
                         metavar="NAME=VALUES", help="e.g. snr=0:2:20 or q=4,8,16")
    val_p = sub.add_parser("validate-config", help="check a config file and exit")
    common(val_p, needs_out=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate-config":
        print("config ok")
        return 0

    workers = args.workers if args.workers else default_workers()
    try:
        if args.command == "run":
            records = [run_point(cfg, workers)]
        else:
            axes = {}
            for item in args.axis:
                name, values = _parse_axis(item)
                axes[name] = values
            records = run_sweep(cfg, axes, workers)
        emit_results(records, args.format, args.out, include_timing=args.timing)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(records)} record(s) to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
