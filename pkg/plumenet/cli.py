"""
plumenet command line

    synth | ndmi | mbmp | train | eval | predict | gradcam | ablate

Exit codes: 0 success, 1 usage error, 2 data / validation error.
"""

import os
import sys
import time
import argparse
import logging
from typing import List, Optional

import psutil

from plumenet import __version__
from plumenet.commands import register_ablation, register_model, register_spectral, register_synth
from plumenet.errors import PlumeNetError, UsageError

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits on its own; route usage errors through UsageError instead"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}", usage=self.format_usage())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plumenet", description="methane plume detection on multispectral patches")
    parser.add_argument("--version", action="version", version=f"plumenet {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    # =================== REGISTER COMMANDS ===================
    register_synth(subparsers)
    register_spectral(subparsers)
    register_model(subparsers)
    register_ablation(subparsers)
    return parser


def _log_resources(command: str, started: float):
    process = psutil.Process(os.getpid())
    cpu = process.cpu_times()
    logger.info(
        f"[CLI] {command} finished in {time.time() - started:.2f}s "
        f"(rss={process.memory_info().rss / 1e6:.1f}MB cpu={cpu.user + cpu.system:.2f}s)"
    )


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, dispatch to the subcommand handler and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(e.usage or parser.format_usage())
        sys.stderr.write(f"error: {e}\n")
        return e.exit_code

    handler = getattr(args, "handler", None)
    if handler is None:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write("error: a command is required\n")
        return UsageError.exit_code

    started = time.time()
    logger.info(f"[CLI] Running {args.command}")
    try:
        code = handler(args)
    except PlumeNetError as e:
        logger.error(f"[CLI] {args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return e.exit_code
    except OSError as e:
        logger.error(f"[CLI] {args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return PlumeNetError.exit_code

    _log_resources(args.command, started)
    return code
