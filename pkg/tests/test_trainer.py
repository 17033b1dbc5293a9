#!/usr/bin/env python3
"""
Trainer and evaluation tests on a tiny synthetic corpus
(width-reduced model, 16 x 16 scenes)
"""

import os
import sys
import json
import tempfile
from datetime import datetime

import numpy as np

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from plumenet.config_manager import AttMetNetConfig, AugmentConfig, EvalConfig, SynthConfig, TrainConfig  # noqa: E402
from plumenet.data import NormalizationStats, synth_corpus  # noqa: E402
from plumenet.errors import DataError, TrainingError  # noqa: E402
from plumenet.model import build_model, load_checkpoint, save_checkpoint  # noqa: E402
from plumenet.services import EvaluationService, TrainerService  # noqa: E402
from plumenet.services.training_history import CSV_COLUMNS, TIMESTAMP_FORMAT  # noqa: E402
from plumenet.spectral import PlumeMask, load_mask, save_mask  # noqa: E402

MODEL = dict(in_channels=13, base_filters=2, depth=2, patch_size=16)
EVAL = EvalConfig(min_pixels=10)


def tiny_corpus(path, n_scenes=10, seed=0):
    config = SynthConfig(size=16, sigma_x=3.0, sigma_y=3.0, amplitude=0.3, seed=seed)
    return synth_corpus(path, n_scenes, config, seed=seed)


def trainer(epochs=2, **overrides):
    train_config = TrainConfig(epochs=epochs, batch_size=4, lr=1e-3, seed=5, **overrides)
    return TrainerService(AttMetNetConfig(**MODEL), train_config, AugmentConfig(), EVAL)


def test_zero_epoch_run_keeps_initial_parameters():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        result = trainer(epochs=0).train(manifest, os.path.join(tmp, "run"))
        initial = build_model(AttMetNetConfig(**MODEL), seed=5)
        for (name, a), (_, b) in zip(initial.named_arrays(), result.params.named_arrays()):
            assert np.array_equal(a, b), name
        assert len(result.history) == 0
        loaded, normalization, meta = load_checkpoint(result.checkpoint)
        assert np.array_equal(loaded["head.weight"].data, initial["head.weight"].data)
        assert normalization.to_dict() == manifest.normalization.to_dict()
        assert meta["role"] == "final"


def test_same_seed_is_bit_identical():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        first = trainer().train(manifest, os.path.join(tmp, "a"))
        second = trainer().train(manifest, os.path.join(tmp, "b"))
        for (name, a), (_, b) in zip(first.params.named_arrays(), second.params.named_arrays()):
            assert np.array_equal(a, b), name
        with open(os.path.join(tmp, "a", "history.csv"), "rb") as f1, \
                open(os.path.join(tmp, "b", "history.csv"), "rb") as f2:
            assert f1.read() == f2.read()
        assert len(first.history) == 2
        assert all(np.isfinite(first.history.column("train_loss")))
        lrs = first.history.column("lr")
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))
        assert os.path.exists(os.path.join(tmp, "a", "best.ckpt.json"))
        assert os.path.exists(os.path.join(tmp, "a", "resources.jsonl"))


def test_training_moves_parameters():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        result = trainer(epochs=1).train(manifest)
        initial = build_model(AttMetNetConfig(**MODEL), seed=5)
        assert not np.array_equal(initial["enc1.conv1.weight"].data, result.params["enc1.conv1.weight"].data)
        assert result.best_epoch == 0
        assert result.checkpoint is None


def test_empty_validation_split():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        try:
            trainer(val_split="holdout").train(manifest)
        except DataError as e:
            assert "holdout" in str(e)
        else:
            raise AssertionError("expected DataError")


def test_non_finite_loss_aborts():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        names = manifest.normalization.band_names
        manifest.normalization = NormalizationStats(names, [float("nan")] * len(names), [1.0] * len(names))
        try:
            trainer(epochs=1).train(manifest)
        except TrainingError as e:
            assert e.epoch == 0 and e.batch == 0
        else:
            raise AssertionError("expected TrainingError")


def test_evaluate_ground_truth_masks():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"), n_scenes=12)
        entries = manifest.split("test")
        truths = [manifest.load_mask(e) for e in entries]
        report = EvaluationService(EVAL).evaluate_masks(manifest, "test", truths)
        assert report.pixel_miou == 1.0
        assert report.scene.accuracy == 1.0
        assert report.n_scenes == len(entries)

        blank = [np.zeros((16, 16), dtype=bool) for _ in entries]
        zeros = EvaluationService(EVAL).evaluate_masks(manifest, "test", blank)
        assert zeros.scene.recall == 0.0
        assert zeros.scene.fpr == 0.0


def test_evaluate_checkpoint_is_repeatable():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        params = build_model(AttMetNetConfig(**MODEL), seed=2)
        path = save_checkpoint(params, os.path.join(tmp, "model"), manifest.normalization)
        service = EvaluationService(EVAL)
        first = service.evaluate_checkpoint(path, manifest, "test")
        second = service.evaluate_checkpoint(path, manifest, "test")
        assert first.to_json() == second.to_json()
        assert first.n_scenes == len(manifest.split("test"))
        predictions = service.predict_split(params, manifest.normalization, manifest, "test")
        assert all(p.prob.shape == (16, 16) for p in predictions)


def test_in_memory_evaluation_matches_checkpoint():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        result = trainer(epochs=1).train(manifest)
        service = EvaluationService(EVAL)
        in_memory = service.evaluate(result.params, result.normalization, manifest, "test")
        path = save_checkpoint(result.params, os.path.join(tmp, "trained"), result.normalization)
        from_disk = service.evaluate_checkpoint(path, manifest, "test")
        assert in_memory.to_json() == from_disk.to_json()


def test_resources_log_is_timestamped():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        run_dir = os.path.join(tmp, "run")
        trainer().train(manifest, run_dir)
        with open(os.path.join(run_dir, "resources.jsonl"), "r", encoding="utf-8") as f:
            lines = [json.loads(line) for line in f if line.strip()]
        assert [item["epoch"] for item in lines] == [0, 1]
        for item in lines:
            datetime.strptime(item["timestamp"], TIMESTAMP_FORMAT)
            assert item["wall_s"] >= 0.0
        with open(os.path.join(run_dir, "history.csv"), "r", encoding="utf-8") as f:
            assert f.readline().strip() == ",".join(CSV_COLUMNS)


def corrupt_first_plume_mask(manifest):
    entry = next(e for e in manifest.entries if e.is_plume)
    path = manifest.resolve(entry.mask_path)
    shape = load_mask(path).shape
    save_mask(PlumeMask(np.zeros(shape, dtype=bool), entry.id), path)
    return entry


def test_empty_plume_mask_stops_training_and_evaluation():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        entry = corrupt_first_plume_mask(manifest)
        try:
            trainer(epochs=1).train(manifest)
        except DataError as e:
            assert entry.id in str(e) and "empty mask" in str(e)
        else:
            raise AssertionError("expected DataError")
        params = build_model(AttMetNetConfig(**MODEL), seed=2)
        try:
            EvaluationService(EVAL).evaluate(params, manifest.normalization, manifest, "test")
        except DataError as e:
            assert "empty mask" in str(e)
        else:
            raise AssertionError("expected DataError")


def test_patch_shared_across_splits_is_rejected():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = tiny_corpus(os.path.join(tmp, "corpus"))
        train_entry = manifest.split("train")[0]
        test_entry = manifest.split("test")[0]
        test_entry.patch_path = train_entry.patch_path
        try:
            trainer(epochs=1).train(manifest)
        except DataError as e:
            assert "appears in splits" in str(e)
        else:
            raise AssertionError("expected DataError")


def run_all_tests():
    print("=" * 60)
    print("🏋️  Trainer Tests")
    print("=" * 60)

    tests = [(name, fn) for name, fn in globals().items() if name.startswith("test_") and callable(fn)]
    failed = []
    for name, fn in tests:
        try:
            fn()
            print(f"   ✅ PASS: {name}")
        except Exception as e:
            print(f"   ❌ FAIL: {name}: {e!r}")
            failed.append(name)

    print(f"\n   Passed: {len(tests) - len(failed)}")
    print(f"   Failed: {len(failed)}")
    return not failed


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
