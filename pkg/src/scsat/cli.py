"""Command-line front end: ``scsat <command> [options]``.

Every configuration key can be given as ``--key value`` (dashes or
underscores), through ``--config FILE`` (key = value lines) or ``--set
key=value``. Precedence: defaults < file < --set < explicit flags.
Exit codes: 0 success, 2 configuration error, 3 numeric or solver error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields

from .config import ConfigError, ExperimentConfig, load
from .errors import NumericError, ScsatError

COMMANDS = ("de", "potential", "exit-chart", "continuum", "interleaver", "thresholds")
ALIASES = {"snr_db": ["--snr"]}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scsat", allow_abbrev=False,
                                description="Threshold-saturation toolkit for coupled systems.")
    p.add_argument("--version", action="store_true", help="print version and exit")
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, allow_abbrev=False)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
        sp.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration and exit")
        for f in fields(ExperimentConfig):
            flags = ["--" + f.name.replace("_", "-")]
            if "_" in f.name:
                flags.append("--" + f.name)
            flags += ALIASES.get(f.name, [])
            sp.add_argument(*flags, dest=f.name, default=None, metavar=f.name.upper())
    return p


def _config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for f in fields(ExperimentConfig):
        val = getattr(args, f.name)
        if val is not None:
            overrides[f.name] = val
    return load(args.config, overrides)


def _limit_threads(n: int) -> None:
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
            os.environ[var] = str(n)


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.version:
        from . import __version__
        print(f"scsat {__version__}")
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        cfg = _config(args)
    except ScsatError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config:
        sys.stdout.write(cfg.dump())
        return 0
    _limit_threads(cfg.threads)
    from . import commands
    run = getattr(commands, "cmd_" + args.command.replace("-", "_"))
    try:
        report = run(cfg)
    except NumericError as exc:
        res = getattr(exc, "residual", None)
        extra = f" (residual {res:.3e})" if isinstance(res, float) else ""
        print(f"numeric error: {exc}{extra}", file=sys.stderr)
        return 3
    except (ScsatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
