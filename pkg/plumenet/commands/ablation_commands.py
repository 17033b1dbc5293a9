"""
ablate - loss ablation (bce / weighted_bce / focal) and NDMI ablation
(12 vs 13 channels) on one corpus with a fixed number of epochs
"""

import os
import csv
import argparse
import copy
import logging
from typing import Dict, List

from plumenet.commands.common import add_common_args, out, resolve_config, write_resolved
from plumenet.commands.model_commands import _corpus_config
from plumenet.data.manifest import load_manifest
from plumenet.services.evaluation_service import EvaluationService
from plumenet.services.trainer_service import TrainerService

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ("run", "loss", "in_channels", "seed", "precision", "recall", "f1", "accuracy",
                    "balanced_accuracy", "pixel_miou")

ABLATION_FLAGS = (
    ("epochs", "train.epochs"),
    ("lr", "train.lr"),
    ("batch_size", "train.batch_size"),
    ("val_split", "train.val_split"),
    ("base_filters", "model.base_filters"),
    ("depth", "model.depth"),
    ("patch_size", "model.patch_size"),
)

# (loss kind, in_channels)
RUNS = (
    ("bce", 13),
    ("weighted_bce", 13),
    ("focal", 13),
    ("focal", 12),
)


def register(subparsers):
    parser = subparsers.add_parser("ablate", help="loss and NDMI ablations on one corpus")
    add_common_args(parser)
    parser.add_argument("--data", required=True, help="corpus directory")
    parser.add_argument("--out", required=True, help="ablation directory")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--split", default="val", help="split the runs are scored on")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--val-split", dest="val_split")
    parser.add_argument("--base-filters", dest="base_filters", type=int)
    parser.add_argument("--depth", type=int)
    parser.add_argument("--patch-size", dest="patch_size", type=int)
    parser.set_defaults(handler=handle_ablate)


def _cell(value):
    if value is None:
        return "undefined"
    return repr(value) if isinstance(value, float) else value


def handle_ablate(args: argparse.Namespace) -> int:
    _corpus_config(args)
    base = resolve_config(args, ABLATION_FLAGS)
    manifest = load_manifest(args.data)
    evaluator = EvaluationService(base.eval)
    rows: List[Dict] = []

    for seed in args.seeds:
        for loss_kind, channels in RUNS:
            name = f"{loss_kind}_c{channels}_s{seed}"
            run_dir = os.path.join(args.out, name)
            model_cfg = copy.deepcopy(base.model)
            model_cfg.in_channels = channels
            train_cfg = copy.deepcopy(base.train)
            train_cfg.seed = seed
            train_cfg.loss.kind = loss_kind
            logger.info(f"[CLI] Ablation run {name}")
            result = TrainerService(model_cfg, train_cfg, base.augment, base.eval).train(manifest, run_dir)
            report = evaluator.evaluate(result.params, result.normalization, manifest, args.split)
            report.save(os.path.join(run_dir, "metrics.json"))
            metrics = report.to_dict()
            rows.append({"run": name, "loss": loss_kind, "in_channels": channels, "seed": seed,
                         **{k: metrics[k] for k in ABLATION_COLUMNS[4:]}})

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "ablation.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in ABLATION_COLUMNS])
    write_resolved(base, args.out)

    out(" ".join(f"{c:>12}" for c in ("run", "recall", "f1", "pixel_miou")))
    for row in rows:
        shown = [row["run"]] + ["undefined" if row[c] is None else f"{row[c]:.4f}" for c in ("recall", "f1", "pixel_miou")]
        out(" ".join(f"{v:>12}" for v in shown))
    return 0
