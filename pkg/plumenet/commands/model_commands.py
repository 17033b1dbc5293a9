"""
train / eval / predict / gradcam
"""

import os
import argparse
import logging

import numpy as np

from plumenet.commands.common import RESOLVED_CONFIG, add_common_args, out, resolve_config, write_resolved
from plumenet.data.manifest import load_manifest
from plumenet.data.transforms import crop, network_input
from plumenet.errors import UsageError
from plumenet.metrics import largest_region
from plumenet.model.attmetnet import layer_names
from plumenet.model.checkpoint import load_checkpoint
from plumenet.model.gradcam import gradcam
from plumenet.services.evaluation_service import EvaluationService, predict_patches
from plumenet.services.trainer_service import TrainerService
from plumenet.spectral import PlumeMask, load_patch, save_mask, save_plane

logger = logging.getLogger(__name__)

TRAIN_FLAGS = (
    ("epochs", "train.epochs"),
    ("lr", "train.lr"),
    ("batch_size", "train.batch_size"),
    ("seed", "train.seed"),
    ("loss", "train.loss.kind"),
    ("pos_weight", "train.loss.pos_weight"),
    ("val_split", "train.val_split"),
    ("max_grad_norm", "train.max_grad_norm"),
    ("in_channels", "model.in_channels"),
    ("base_filters", "model.base_filters"),
    ("depth", "model.depth"),
    ("block_order", "model.block_order"),
    ("patch_size", "model.patch_size"),
)

EVAL_FLAGS = (
    ("threshold", "eval.prob_threshold"),
    ("min_pixels", "eval.min_pixels"),
    ("connectivity", "eval.connectivity"),
    ("miou_mode", "eval.miou_mode"),
)


def _add_eval_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--threshold", type=float, help="probability binarization threshold")
    parser.add_argument("--min-pixels", dest="min_pixels", type=int)
    parser.add_argument("--connectivity", type=int, choices=(4, 8))
    parser.add_argument("--miou-mode", dest="miou_mode", choices=("two_class", "foreground"))


def register(subparsers):
    train = subparsers.add_parser("train", help="train AttMetNet on a corpus")
    add_common_args(train)
    train.add_argument("--data", required=True, help="corpus directory")
    train.add_argument("--out", help="run directory (default <data>/run)")
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--loss", choices=("focal", "bce", "weighted_bce"))
    train.add_argument("--pos-weight", dest="pos_weight", type=float)
    train.add_argument("--val-split", dest="val_split")
    train.add_argument("--max-grad-norm", dest="max_grad_norm", type=float)
    train.add_argument("--in-channels", dest="in_channels", type=int, choices=(12, 13))
    train.add_argument("--base-filters", dest="base_filters", type=int)
    train.add_argument("--depth", type=int)
    train.add_argument("--block-order", dest="block_order", choices=("conv-relu-bn", "conv-bn-relu"))
    train.add_argument("--patch-size", dest="patch_size", type=int)
    train.set_defaults(handler=handle_train)

    ev = subparsers.add_parser("eval", help="score a checkpoint on a corpus split")
    add_common_args(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="corpus directory")
    ev.add_argument("--split", default="test")
    ev.add_argument("--out", help="directory for metrics.json (default: checkpoint directory)")
    _add_eval_flags(ev)
    ev.set_defaults(handler=handle_eval)

    predict = subparsers.add_parser("predict", help="plume masks and scene verdicts for patch files")
    add_common_args(predict)
    predict.add_argument("--checkpoint", required=True)
    predict.add_argument("--in", dest="inputs", nargs="+", required=True, help="patch header(s)")
    predict.add_argument("--out", help="output directory (default: next to each input)")
    _add_eval_flags(predict)
    predict.set_defaults(handler=handle_predict)

    cam = subparsers.add_parser("gradcam", help="Grad-CAM heatmap for a named layer")
    add_common_args(cam)
    cam.add_argument("--checkpoint", required=True)
    cam.add_argument("--in", dest="inputs", nargs="+", required=True, help="patch header(s)")
    cam.add_argument("--layer", default="dec1", help="conv block output, e.g. enc1..enc4, bottleneck, dec4..dec1")
    cam.add_argument("--out", help="output directory (default: next to each input)")
    cam.add_argument("--threshold", type=float)
    cam.set_defaults(handler=handle_gradcam)


def _corpus_config(args: argparse.Namespace):
    """The corpus's own resolved config stands in for --config when none is given"""
    if not getattr(args, "config", None) and getattr(args, "data", None):
        candidate = os.path.join(args.data, RESOLVED_CONFIG)
        if os.path.exists(candidate):
            logger.info(f"[CLI] Using corpus config {candidate}")
            args.config = candidate


def handle_train(args: argparse.Namespace) -> int:
    _corpus_config(args)
    config = resolve_config(args, TRAIN_FLAGS)
    manifest = load_manifest(args.data)
    run_dir = args.out or os.path.join(args.data, "run")
    trainer = TrainerService(config.model, config.train, config.augment, config.eval)
    result = trainer.train(manifest, run_dir)
    write_resolved(config, run_dir)
    last = result.history.records[-1] if result.history.records else None
    if last is not None:
        out(f"trained {len(result.history)} epochs: train_loss={last.train_loss:.6f} val_loss={last.val_loss:.6f} "
            f"best_epoch={result.best_epoch + 1}")
    else:
        out("trained 0 epochs: initial parameters saved")
    out(f"checkpoint: {result.checkpoint}")
    out(f"best: {result.best_checkpoint}")
    return 0


def handle_eval(args: argparse.Namespace) -> int:
    config = resolve_config(args, EVAL_FLAGS)
    manifest = load_manifest(args.data)
    report = EvaluationService(config.eval).evaluate_checkpoint(args.checkpoint, manifest, args.split)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    report.save(os.path.join(out_dir, f"metrics_{args.split}.json"))
    write_resolved(config, out_dir)
    out(report.table())
    return 0


def _target_dir(path: str, out_dir) -> str:
    return out_dir or os.path.dirname(os.path.abspath(path))


def _target(path: str, out_dir, suffix: str) -> str:
    base = os.path.splitext(os.path.basename(path))[0]
    return os.path.join(_target_dir(path, out_dir), f"{base}_{suffix}")


def handle_predict(args: argparse.Namespace) -> int:
    config = resolve_config(args, EVAL_FLAGS)
    params, normalization, _ = load_checkpoint(args.checkpoint)
    size = params.config.patch_size
    patches = [crop(p, PlumeMask(np.zeros(p.bands.shape[1:], dtype=bool)), "center", size)[0]
               for p in (load_patch(path) for path in args.inputs)]
    probs = predict_patches(params, normalization, patches)
    ecfg = config.eval
    for path, patch, prob in zip(args.inputs, patches, probs):
        mask = PlumeMask(prob > ecfg.prob_threshold, patch.name)
        header = save_mask(mask, _target(path, args.out, "mask"))
        largest = largest_region(mask, ecfg.connectivity)
        verdict = "true" if largest > ecfg.min_pixels else "false"
        logger.info(f"[CLI] {patch.name}: mask -> {header}")
        out(f"plume: {verdict} (largest region {largest} px)")
        if patch.geo:
            out(f"  location: lat={patch.geo.get('lat')} lon={patch.geo.get('lon')} "
                f"time={patch.geo.get('timestamp')}")
    for directory in sorted({_target_dir(path, args.out) for path in args.inputs}):
        write_resolved(config, directory)
    return 0


def handle_gradcam(args: argparse.Namespace) -> int:
    config = resolve_config(args, (("threshold", "eval.prob_threshold"),))
    params, normalization, _ = load_checkpoint(args.checkpoint)
    if args.layer not in layer_names(params.config.depth):
        raise UsageError(f"unknown layer {args.layer!r}; expected one of {layer_names(params.config.depth)}")
    size = params.config.patch_size
    for path in args.inputs:
        patch = load_patch(path)
        patch, _ = crop(patch, PlumeMask(np.zeros(patch.bands.shape[1:], dtype=bool)), "center", size)
        x = network_input(patch, params.config.in_channels, normalization)[None]
        heatmap = gradcam(params, x, args.layer, config.eval.prob_threshold)
        header = save_plane(heatmap, _target(path, args.out, f"gradcam_{args.layer}"), f"GRADCAM_{args.layer}",
                            patch.geo)
        row, col = np.unravel_index(int(np.argmax(heatmap)), heatmap.shape)
        out(f"gradcam: {header} peak=({row}, {col})")
    for directory in sorted({_target_dir(path, args.out) for path in args.inputs}):
        write_resolved(config, directory)
    return 0
