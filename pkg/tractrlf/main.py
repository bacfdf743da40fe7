"""
tractrlf command line: `python -m tractrlf.main <stage> ...`.

Exit codes: 0 success, 2 usage error, 3 missing upstream artifact, 4 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from tractrlf import __version__
from tractrlf.cli import data, mrm, pipeline, report, rl, tracking, trlf
from tractrlf.core.config import PipelineSettings, load_settings
from tractrlf.core.errors import TRLFError
from tractrlf.core.logs import configure_logging
from tractrlf.diffcore.tensor import set_debug

logger = logging.getLogger("tractrlf.main")

STAGE_MODULES = (data, mrm, rl, trlf, tracking, report, pipeline)


def _add_global_options(parser: argparse.ArgumentParser, default=None) -> None:
    parser.add_argument("--config", type=Path, default=default, help="TOML settings file")
    parser.add_argument("--workdir", type=Path, default=default, help="Ledger and default output directory")
    parser.add_argument("--seed", type=int, default=default, help="Global rng seed")
    parser.add_argument("--threads", type=int, default=default, help="Worker threads (default: TRLF_THREADS or 1)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=default)
    parser.add_argument("--debug", action="store_true", default=default, help="Check every forward value for NaN/inf")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tractrlf", description="Desk-scale RL tractography and its transformer distillation")
    parser.add_argument("--version", action="version", version=f"tractrlf {__version__}")
    _add_global_options(parser)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in STAGE_MODULES:
        module.register(subparsers)
    # global options are accepted after the subcommand too; SUPPRESS keeps earlier values
    for sub in subparsers.choices.values():
        _add_global_options(sub, argparse.SUPPRESS)
    return parser


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def settings_from_args(args: argparse.Namespace) -> PipelineSettings:
    flags = {
        "workdir": args.workdir,
        "rng_seed": args.seed,
        "threads": args.threads,
        "log_level": args.log_level,
        "debug": args.debug,
    }
    overrides = {k: v for k, v in flags.items() if v is not None}
    stage_overrides = getattr(args, "overrides", None)
    if stage_overrides is not None:
        overrides = _merge(overrides, stage_overrides(args))
    return load_settings(args.config, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        settings = settings_from_args(args)
        configure_logging(settings.log_level)
        set_debug(settings.debug)
        args.func(settings, args)
    except TRLFError as exc:
        logger.error(str(exc), extra={"fields": {"error": type(exc).__name__, "exit_code": exc.exit_code}})
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
