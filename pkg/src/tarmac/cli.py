"""Command line entry point: ``tarmac simulate | sweep | attack | presets``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from tarmac.adversary import (
    DEFAULT_SHUFFLES,
    DEFAULT_WINDOW_US,
    analyze,
    format_report,
    read_tx_log,
    write_attack_report,
)
from tarmac.config import ConfigError, RunConfig, load_config, parse_assignments
from tarmac.harness import OUTPUT_ROOT_ENV, RunFailure, output_root, run_sweep, write_run
from tarmac.presets import PRESETS, get_preset, help_text, manifest_json
from tarmac.routing import grid_topology

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    epilog = (
        f"Outputs go under ${OUTPUT_ROOT_ENV} (default: current directory).\n"
        f"Exit status: 0 ok, 1 configuration error, 2 runtime error.\n\n{help_text()}"
    )
    p = _Parser(
        prog="tarmac",
        description="Discrete-event simulator for fixed-schedule anti-traffic-analysis MACs.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run one configuration")
    sim.add_argument("--config", help="key = value config file (defaults if omitted)")
    sim.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    sim.add_argument("--out", help="output directory (default: <root>/<output_dir>)")
    sim.add_argument("--trace", help="write the dispatched event trace to this file")

    sw = sub.add_parser("sweep", help="run a named preset over several seeds",
                        epilog=help_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sw.add_argument("--preset", required=True, choices=sorted(PRESETS))
    sw.add_argument("--seeds", type=int, default=1, help="number of seeds, 1..K")
    sw.add_argument("--config", help="base config file the preset is applied on top of")
    sw.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sw.add_argument("--out", help="sweep directory (default: <root>/<preset>)")
    sw.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    at = sub.add_parser("attack", help="score a transmission log as a passive observer")
    at.add_argument("--log", required=True, help="tx_log.csv to analyze")
    at.add_argument("--rows", type=int, default=10)
    at.add_argument("--cols", type=int, default=10)
    at.add_argument("--spacing", type=float, default=20.0, help="grid spacing, metres")
    at.add_argument("--range", dest="range_m", type=float, default=40.0, help="radio range, metres")
    at.add_argument("--window-ms", type=float, default=DEFAULT_WINDOW_US / 1000)
    at.add_argument("--shuffles", type=int, default=DEFAULT_SHUFFLES)
    at.add_argument("--seed", type=int, default=0)
    at.add_argument("--out", help="write attack_report.csv here")

    pr = sub.add_parser("presets", help="print the preset manifest as JSON")
    pr.add_argument("--out", help="also write the manifest to this file")
    return p


def _config(args) -> RunConfig:
    if args.config:
        return load_config(args.config, args.set)
    return parse_assignments(args.set, RunConfig())


def cmd_simulate(args) -> int:
    cfg = _config(args).validate()
    out = Path(args.out) if args.out else output_root() / cfg.output_dir
    if args.trace:
        try:
            fh = open(args.trace, "w")
        except OSError as exc:
            raise RunFailure(f"cannot open trace file: {exc}") from None
        with fh:
            row = write_run(cfg, out, fh)
    else:
        row = write_run(cfg, out)
    print(f"{out}: delivered {row['delivered']}/{row['generated']} "
          f"occupancy={row['occupancy'] or 'n/a'} M/m={row['M_per_m'] or 'n/a'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    base = _config(args)
    preset = get_preset(args.preset)
    configs = preset.configs(range(1, args.seeds + 1), base)
    out = Path(args.out) if args.out else output_root() / preset.name
    result = run_sweep(configs, out, jobs=args.jobs)
    print(f"{result.path}: {len(result.rows)}/{len(configs)} runs")
    if result.failed:
        cfg, msg = result.failed[0]
        print(f"sweep stopped at {cfg.digest()}: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_attack(args) -> int:
    try:
        log = read_tx_log(args.log)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    topo = grid_topology(args.rows, args.cols, args.spacing, args.range_m)
    if len(log) and int(log.sender.max()) >= len(topo):
        raise ConfigError(f"log names node {int(log.sender.max())}, grid has only {len(topo)}")
    report = analyze(log, topo, None, int(round(args.window_ms * 1000)), args.shuffles, args.seed)
    print(format_report(report))
    if args.out:
        try:
            write_attack_report(args.out, report)
        except OSError as exc:
            raise RunFailure(str(exc)) from None
    return EXIT_OK


def cmd_presets(args) -> int:
    text = manifest_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "attack": cmd_attack, "presets": cmd_presets}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunFailure, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
