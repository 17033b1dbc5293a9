"""
synth - write a synthetic plume corpus
"""

import argparse
import logging

from plumenet.commands.common import add_common_args, out, resolve_config, write_resolved
from plumenet.data.synth import synth_corpus
from plumenet.errors import UsageError

logger = logging.getLogger(__name__)

FLAGS = (
    ("amplitude", "synth.amplitude"),
    ("sigma_x", "synth.sigma_x"),
    ("sigma_y", "synth.sigma_y"),
    ("profile", "synth.profile"),
    ("size", "synth.size"),
    ("positive_fraction", "synth.positive_fraction"),
    ("noise_std", "synth.noise_std"),
    ("seed", "synth.seed"),
)


def register(subparsers):
    parser = subparsers.add_parser("synth", help="generate a synthetic Gaussian-plume corpus")
    add_common_args(parser)
    parser.add_argument("--scenes", type=int, default=20, help="number of scenes (default 20)")
    parser.add_argument("--out", required=True, help="corpus directory")
    parser.add_argument("--amplitude", type=float)
    parser.add_argument("--sigma", type=float, help="sets sigma_x and sigma_y")
    parser.add_argument("--sigma-x", dest="sigma_x", type=float)
    parser.add_argument("--sigma-y", dest="sigma_y", type=float)
    parser.add_argument("--profile", choices=("gaussian", "flat"))
    parser.add_argument("--size", type=int)
    parser.add_argument("--positive-fraction", dest="positive_fraction", type=float)
    parser.add_argument("--noise-std", dest="noise_std", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--overfit", action="store_true",
                        help="put every scene in the train split and validate on it")
    parser.set_defaults(handler=handle_synth)


def handle_synth(args: argparse.Namespace) -> int:
    extra = {}
    if args.sigma is not None:
        extra.update({"synth.sigma_x": args.sigma, "synth.sigma_y": args.sigma})
    if args.overfit:
        extra["train.val_split"] = "train"
    config = resolve_config(args, FLAGS, extra)
    if args.scenes < 1:
        raise UsageError("--scenes must be >= 1")

    manifest = synth_corpus(args.out, args.scenes, config.synth, config.synth.seed, overfit=args.overfit)
    write_resolved(config, args.out)
    counts = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    out(f"corpus: {args.out} scenes={len(manifest)} train={counts['train']} val={counts['val']} test={counts['test']}")
    return 0
