"""Command-line entry point: ``qiopa <subcommand> [--config PATH] [--seed N] [--workers N] [--out DIR]``.

Exit status: 0 success, 2 configuration error, 3 regime or precondition
error, 4 oracle-check failure.  ``QIOPA_WORKERS`` sets the worker count
when ``--workers`` is not given.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, bundled_configs, load_bundled
from .metrics import DomainError, RegimeError
from .oracle import OracleResolutionError
from .scenarios import run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_ORACLE = 4

COMMANDS = {
    "fringe": "fringe",
    "enhancement-map": "enhancement_map",
    "of-tradeoff": "of_tradeoff",
    "fisher": "fisher",
    "calibrate": "calibrate",
    "oracle-check": "oracle_check",
}

HELP = {
    "fringe": "MC counting fringes with and without amplification, plus fitted visibilities",
    "enhancement-map": "closed-form enhancement, saturation and critical-injection grids",
    "of-tradeoff": "orthogonality-filter threshold sweep against the counting strategy",
    "fisher": "classical Fisher information of photon counting vs S^2 and H_ampl",
    "calibrate": "fit gain and efficiency to counts-versus-power data",
    "oracle-check": "closed forms vs dense oracle and sampler vs exact law",
}


def _global_flags(parser: argparse.ArgumentParser):
    s = argparse.SUPPRESS
    parser.add_argument("--config", default=s, help="YAML config file or bundled config name (e.g. fig2a)")
    parser.add_argument("--seed", type=int, default=s, help="master seed (unsigned 64-bit)")
    parser.add_argument("--workers", type=int, default=s, help="MC worker threads (default: $QIOPA_WORKERS or config)")
    parser.add_argument("--out", default=s, help="output directory")
    parser.add_argument("--set", action="append", default=s, metavar="KEY=VALUE",
                        help="override a config entry, e.g. --set physics.g=3.0 (repeatable)")
    parser.add_argument("--dump-config", action="store_true", default=s,
                        help="print the resolved config and exit")
    parser.add_argument("--corrupt-formula", action="store_true", default=s, help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qiopa", description="Amplified single-photon phase estimation: simulations and figure data.")
    parser.add_argument("--list-configs", action="store_true", help="list bundled configs and exit")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        _global_flags(sub.add_parser(name, help=HELP[name], description=HELP[name]))
    return parser


def _resolve(command: str, args: argparse.Namespace) -> ScenarioConfig:
    kind = COMMANDS[command]
    path = getattr(args, "config", None)
    if path is None:
        cfg = ScenarioConfig(kind)
    elif Path(path).exists():
        cfg = ScenarioConfig.load(path)
    elif path in bundled_configs():
        cfg = load_bundled(path)
    else:
        raise ConfigError(f"config {path!r} is neither a file nor a bundled config")
    if cfg.kind != kind:
        raise ConfigError(f"config describes a {cfg.kind!r} scenario, not {kind!r}")
    workers = getattr(args, "workers", None)
    if workers is None and os.environ.get("QIOPA_WORKERS"):
        try:
            workers = int(os.environ["QIOPA_WORKERS"])
        except ValueError:
            raise ConfigError("QIOPA_WORKERS must be an integer") from None
    sets = list(getattr(args, "set", None) or [])
    if getattr(args, "corrupt_formula", False):
        if kind != "oracle_check":
            raise ConfigError("--corrupt-formula only applies to oracle-check")
        sets.append("physics.corrupt=true")
    return cfg.with_overrides(sets, seed=getattr(args, "seed", None), workers=workers, out=getattr(args, "out", None))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_configs:
        for name in bundled_configs():
            print(f"{name}\t{load_bundled(name).kind}")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        cfg = _resolve(args.command, args)
        if getattr(args, "dump_config", False):
            sys.stdout.write(cfg.to_yaml())
            return EXIT_OK
        archive = run_scenario(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RegimeError, DomainError, OracleResolutionError) as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    out = archive.write(cfg.output_dir)
    print(f"wrote {', '.join(sorted(archive.tables))} to {out} (config {archive.config_hash})")
    if cfg.kind == "oracle_check" and not archive.summary.get("passed", False):
        print(f"oracle check failed: see {out}/oracle.csv and {out}/sampler.csv", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
