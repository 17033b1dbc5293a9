#!/usr/bin/env python3
"""
plumenet - Command Line Entry Point

All logic lives in the plumenet package:
- plumenet/commands/  - subcommand handlers
- plumenet/services/  - training and evaluation
- plumenet/model/     - AttMetNet parameters, forward pass, Grad-CAM, checkpoints
"""

import sys
import logging
from logging.handlers import RotatingFileHandler

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from plumenet.config_manager import LoggingConfig, ConfigManager  # noqa: E402
from plumenet.errors import ConfigError  # noqa: E402


def setup_logging(config: LoggingConfig):
    """Root logger: stderr + size-rotated UTF-8 file"""
    handlers = [logging.StreamHandler(sys.stderr)]
    if config.file:
        handlers.append(RotatingFileHandler(config.file, maxBytes=config.max_bytes,
                                            backupCount=config.backup_count, encoding="utf-8"))
    logging.basicConfig(level=getattr(logging, config.level.upper(), logging.INFO),
                        format=config.format, handlers=handlers, force=True)


def main() -> int:
    try:
        setup_logging(ConfigManager().logging)
    except ConfigError as e:
        sys.stderr.write(f"error: {e}\n")
        return e.exit_code

    from plumenet.cli import run
    return run(sys.argv[1:])


if __name__ == '__main__':
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logging.getLogger(__name__).info("[CLI] Interrupted")
        sys.exit(130)
