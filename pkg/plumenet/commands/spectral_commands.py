"""
ndmi / mbmp - band math over patch files
"""

import os
import argparse
import logging

from plumenet.commands.common import add_common_args, out, resolve_config, write_resolved
from plumenet.data.manifest import load_manifest
from plumenet.errors import UsageError
from plumenet.mbmp import PassPair, detect
from plumenet.metrics import build_report
from plumenet.spectral import load_patch, save_mask, save_patch, save_plane, stack_ndmi

logger = logging.getLogger(__name__)

MBMP_FLAGS = (
    ("threshold", "mbmp.threshold"),
    ("min_pixels", "mbmp.min_pixels"),
    ("connectivity", "mbmp.connectivity"),
)


def register(subparsers):
    ndmi = subparsers.add_parser("ndmi", help="append the NDMI channel to 12-band patch files")
    add_common_args(ndmi)
    ndmi.add_argument("--in", dest="inputs", nargs="+", required=True, help="12-band patch header(s)")
    ndmi.add_argument("--out", help="output directory (default: next to each input, suffix _ndmi)")
    ndmi.set_defaults(handler=handle_ndmi)

    mbmp = subparsers.add_parser("mbmp", help="multi-band multi-pass retrieval, mask and scene verdicts")
    add_common_args(mbmp)
    mbmp.add_argument("--in", dest="plume", help="plume-pass patch header")
    mbmp.add_argument("--ref", help="reference-pass patch header")
    mbmp.add_argument("--data", help="corpus directory; every entry with a reference pass is processed")
    mbmp.add_argument("--split", help="restrict --data to one split")
    mbmp.add_argument("--out", required=True, help="output directory")
    mbmp.add_argument("--threshold", type=float)
    mbmp.add_argument("--min-pixels", dest="min_pixels", type=int)
    mbmp.add_argument("--connectivity", type=int, choices=(4, 8))
    mbmp.set_defaults(handler=handle_mbmp)


def handle_ndmi(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    target_dirs = set()
    for path in args.inputs:
        patch = load_patch(path)
        stacked = stack_ndmi(patch)
        base = os.path.splitext(os.path.basename(path))[0] + "_ndmi"
        target_dir = args.out or os.path.dirname(os.path.abspath(path))
        header = save_patch(stacked, os.path.join(target_dir, base))
        target_dirs.add(target_dir)
        logger.info(f"[SPECTRAL] {path} -> {header}")
        out(f"ndmi: {header}")
    for directory in sorted(target_dirs):
        write_resolved(config, directory)
    return 0


def _verdict(name: str, result, geo=None):
    out(f"{name}: plume: {'true' if result.plume else 'false'} (largest region {result.largest_region} px)")
    if geo:
        out(f"  location: lat={geo.get('lat')} lon={geo.get('lon')} time={geo.get('timestamp')}")


def handle_mbmp(args: argparse.Namespace) -> int:
    if bool(args.data) == bool(args.plume):
        raise UsageError("mbmp needs either --data or --in/--ref")
    if args.plume and not args.ref:
        raise UsageError("--in needs --ref")
    config = resolve_config(args, MBMP_FLAGS)
    os.makedirs(args.out, exist_ok=True)

    if args.plume:
        plume = load_patch(args.plume)
        result = detect(PassPair(plume, load_patch(args.ref)), config.mbmp)
        name = plume.name
        save_plane(result.retrieval, os.path.join(args.out, f"{name}_retrieval"), "MBMP", plume.geo)
        save_mask(result.mask, os.path.join(args.out, f"{name}_mask"))
        _verdict(name, result, plume.geo)
        write_resolved(config, args.out)
        return 0

    manifest = load_manifest(args.data)
    manifest.validate()
    entries = [e for e in manifest.entries if e.ref_path and (args.split is None or e.split == args.split)]
    if not entries:
        raise UsageError("no entries with a reference pass in the selected corpus / split")
    preds, truths, labels = [], [], []
    for entry in entries:
        plume = manifest.load_patch(entry)
        result = detect(PassPair(plume, manifest.load_ref(entry)), config.mbmp)
        save_plane(result.retrieval, os.path.join(args.out, f"{entry.id}_retrieval"), "MBMP", plume.geo)
        save_mask(result.mask, os.path.join(args.out, f"{entry.id}_mask"))
        _verdict(entry.id, result, plume.geo)
        preds.append(result.mask)
        truths.append(manifest.load_mask(entry, plume.bands.shape[1:]))
        labels.append(entry.is_plume)

    report = build_report(preds, truths, labels, config.mbmp.min_pixels, config.mbmp.connectivity,
                          config.eval.miou_mode)
    report.save(os.path.join(args.out, "mbmp_metrics.json"))
    out(report.table())
    write_resolved(config, args.out)
    return 0
