#!/usr/bin/env python
"""
Run Acceptance Script

Executes the synthetic end-to-end checks in sequence:
1. Overfit corpus (8 plume scenes, train == val)
2. Overfit training, width-reduced model, 200 epochs
3. Evaluation on the training scenes (mIoU)
4. Grad-CAM peaks on 5 held-out plume scenes of a 13-channel model
   trained on a separate 40-scene corpus
5. MBMP on a flat 10% enhancement corpus
6. Loss and NDMI ablations on a 40-scene corpus, 3 seeds

Usage:
    python scripts/run_acceptance.py
    python scripts/run_acceptance.py --skip-ablation
    python scripts/run_acceptance.py --workdir /tmp/plumenet_acceptance
"""

import os
import re
import csv
import sys
import json
import time
import tempfile
import subprocess

# Add project root to path
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from plumenet.data import load_manifest  # noqa: E402

MAIN = os.path.join(PROJECT_ROOT, "main.py")
TINY_MODEL = ["--base-filters", "4", "--depth", "2", "--patch-size", "16"]
TINY_SCENE = ["--size", "16", "--sigma", "3", "--amplitude", "0.3"]


def plumenet(*args) -> subprocess.CompletedProcess:
    """Run one plumenet command; stdout is captured for parsing"""
    result = subprocess.run([sys.executable, MAIN, *args], cwd=PROJECT_ROOT,
                            stdout=subprocess.PIPE, text=True)
    if result.returncode != 0:
        print(f"❌ plumenet {args[0]} exited with {result.returncode}")
    return result


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def check(label: str, ok: bool, detail: str) -> bool:
    print(f"   {'✅' if ok else '❌'} {label}: {detail}")
    return ok


def overfit_steps(work: str) -> bool:
    corpus = os.path.join(work, "overfit")
    run_dir = os.path.join(work, "overfit_run")

    print("\n📦 Step 1: Writing overfit corpus...")
    if plumenet("synth", "--out", corpus, "--scenes", "8", "--positive-fraction", "1.0",
                "--overfit", *TINY_SCENE).returncode != 0:
        return False

    print("\n🏋️  Step 2: Overfit training (200 epochs)...")
    started = time.time()
    if plumenet("train", "--data", corpus, "--out", run_dir, "--epochs", "200", "--lr", "0.001",
                "--batch-size", "8", *TINY_MODEL).returncode != 0:
        return False
    elapsed = time.time() - started
    with open(os.path.join(run_dir, "history.csv"), "r", encoding="utf-8", newline="") as f:
        losses = [float(row["train_loss"]) for row in csv.DictReader(f)]
    ok = check("train focal loss", min(losses) < 0.01, f"min {min(losses):.5f} after {len(losses)} epochs")
    ok &= check("runtime", elapsed < 15 * 60, f"{elapsed:.0f}s")

    print("\n📊 Step 3: Evaluating on the training scenes...")
    if plumenet("eval", "--checkpoint", os.path.join(run_dir, "final.ckpt.json"), "--data", corpus,
                "--split", "train", "--min-pixels", "10").returncode != 0:
        return False
    miou = read_json(os.path.join(run_dir, "metrics_train.json"))["pixel_miou"]
    ok &= check("overfit mIoU", miou is not None and miou > 0.9, f"{miou}")

    return ok


def gradcam_step(work: str) -> bool:
    corpus = os.path.join(work, "gradcam_corpus")
    run_dir = os.path.join(work, "gradcam_run")

    print("\n🔥 Step 4: Grad-CAM peaks on held-out scenes...")
    if plumenet("synth", "--out", corpus, "--scenes", "40", "--positive-fraction", "1.0",
                *TINY_SCENE).returncode != 0:
        return False
    if plumenet("train", "--data", corpus, "--out", run_dir, "--epochs", "60", "--lr", "0.001",
                "--batch-size", "8", "--in-channels", "13", *TINY_MODEL).returncode != 0:
        return False
    manifest = load_manifest(corpus)
    held_out = [e for split in ("test", "val") for e in manifest.split(split) if e.is_plume][:5]
    hits = 0
    for entry in held_out:
        result = plumenet("gradcam", "--checkpoint", os.path.join(run_dir, "final.ckpt.json"),
                          "--in", manifest.resolve(entry.patch_path),
                          "--out", os.path.join(work, "gradcam"), "--layer", "dec1")
        match = re.search(r"peak=\((\d+), (\d+)\)", result.stdout or "")
        if result.returncode != 0 or not match:
            continue
        rows, cols = manifest.load_mask(entry).values.nonzero()
        if rows.size == 0:
            continue
        row, col = int(match.group(1)), int(match.group(2))
        hits += int(rows.min() <= row <= rows.max() and cols.min() <= col <= cols.max())
    return check("Grad-CAM peak in plume box", len(held_out) == 5 and hits >= 4,
                 f"{hits}/{len(held_out)} held-out scenes")



def mbmp_step(work: str) -> bool:
    corpus = os.path.join(work, "mbmp")
    out_dir = os.path.join(work, "mbmp_out")

    print("\n🛰️  Step 5: MBMP on 10% enhancement scenes...")
    if plumenet("synth", "--out", corpus, "--scenes", "8", "--positive-fraction", "1.0", "--profile", "flat",
                "--amplitude", "0.1", "--size", "64").returncode != 0:
        return False
    if plumenet("mbmp", "--data", corpus, "--out", out_dir, "--threshold", "-0.05",
                "--set", "eval.miou_mode=foreground").returncode != 0:
        return False
    miou = read_json(os.path.join(out_dir, "mbmp_metrics.json"))["pixel_miou"]
    return check("MBMP plume IoU", miou is not None and miou > 0.5, f"{miou}")


def _majority(rows, column, better, worse, seeds) -> int:
    wins = 0
    for seed in seeds:
        a = next(r for r in rows if r["run"] == f"{better}_s{seed}")[column]
        b = next(r for r in rows if r["run"] == f"{worse}_s{seed}")[column]
        if a != "undefined" and (b == "undefined" or float(a) >= float(b)):
            wins += 1
    return wins


def ablation_step(work: str) -> bool:
    corpus = os.path.join(work, "ablation_corpus")
    out_dir = os.path.join(work, "ablation")
    seeds = ["0", "1", "2"]

    print("\n🧪 Step 6: Loss and NDMI ablations (40 scenes, 3 seeds)...")
    if plumenet("synth", "--out", corpus, "--scenes", "40", *TINY_SCENE).returncode != 0:
        return False
    if plumenet("ablate", "--data", corpus, "--out", out_dir, "--seeds", *seeds, "--epochs", "15",
                "--lr", "0.001", "--batch-size", "8", *TINY_MODEL).returncode != 0:
        return False
    with open(os.path.join(out_dir, "ablation.csv"), "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    recall_wins = _majority(rows, "recall", "focal_c13", "bce_c13", seeds)
    f1_wins = _majority(rows, "f1", "focal_c13", "focal_c12", seeds)
    ok = check("focal recall >= BCE recall", recall_wins >= 2, f"{recall_wins}/3 seeds")
    ok &= check("13-channel F1 >= 12-channel F1", f1_wins >= 2, f"{f1_wins}/3 seeds")
    return ok


def main():
    args = sys.argv[1:]
    skip_ablation = "--skip-ablation" in args
    work = args[args.index("--workdir") + 1] if "--workdir" in args else tempfile.mkdtemp(prefix="plumenet_")
    os.makedirs(work, exist_ok=True)

    print("\n" + "=" * 60)
    print("🚀 PlumeNet Synthetic Acceptance Runner")
    print("=" * 60)
    print(f"   workdir: {work}")

    ok = overfit_steps(work)
    ok &= gradcam_step(work)
    ok &= mbmp_step(work)
    if skip_ablation:
        print("\n🧪 Step 6: Ablations (skipped)")
    else:
        ok &= ablation_step(work)

    print("\n" + "=" * 60)
    print("✅ All acceptance checks passed!" if ok else "❌ Some acceptance checks failed")
    print("=" * 60 + "\n")
    return ok


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
