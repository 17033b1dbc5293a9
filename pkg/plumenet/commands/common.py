"""
Shared command plumbing: common flags, flag -> config key mapping and
provenance output
"""

import os
import argparse
import logging
from typing import Dict, Iterable, Optional, Tuple

from plumenet.config_manager import ConfigManager, parse_override

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "resolved_config.json"

# (argparse dest, dotted config key)
FlagMap = Iterable[Tuple[str, str]]


def add_common_args(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file (sections model/train/synth/augment/eval/mbmp/logging)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config field; repeatable")


def resolve_config(args: argparse.Namespace, flag_map: FlagMap = (),
                   extra: Optional[Dict] = None) -> ConfigManager:
    """Field-wise precedence: explicit flag > --set > config file > environment > default"""
    overrides: Dict = {}
    for text in getattr(args, "overrides", []) or []:
        key, value = parse_override(text)
        overrides[key] = value
    for dest, key in flag_map:
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    if extra:
        overrides.update(extra)
    return ConfigManager(config_file=getattr(args, "config", None), overrides=overrides)


def write_resolved(config: ConfigManager, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RESOLVED_CONFIG)
    config.save_config(path)
    return path


def out(line: str = ""):
    """stdout is for tables and verdict lines only"""
    print(line, flush=True)
