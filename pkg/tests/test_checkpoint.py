#!/usr/bin/env python3
"""
Checkpoint tests - manifest + payload round trip and corruption handling
"""

import os
import sys
import json
import tempfile

import numpy as np

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from plumenet.config_manager import AttMetNetConfig  # noqa: E402
from plumenet.data.manifest import NormalizationStats  # noqa: E402
from plumenet.errors import CheckpointError  # noqa: E402
from plumenet.model import build_model, checkpoint_paths, load_checkpoint, predict_proba, save_checkpoint  # noqa: E402

CONFIG = dict(in_channels=4, base_filters=4, depth=2, patch_size=16)


def stats():
    names = ["B01", "B02", "B03", "B04"]
    return NormalizationStats(names, [0.1, 0.2, 0.3, 0.4], [0.01, 0.02, 0.03, 0.04])


def test_paths_accept_either_suffix():
    assert checkpoint_paths("run/final") == ("run/final.ckpt.json", "run/final.ckpt.bin")
    assert checkpoint_paths("run/final.ckpt.json") == ("run/final.ckpt.json", "run/final.ckpt.bin")
    assert checkpoint_paths("run/final.ckpt.bin")[0] == "run/final.ckpt.json"


def test_roundtrip_is_exact():
    params = build_model(AttMetNetConfig(**CONFIG), seed=3)
    # move running stats off their defaults
    params.bn["enc1.bn1"].running_mean = np.linspace(-1.0, 1.0, 4)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(params, os.path.join(tmp, "model"), stats(), {"epoch": 4})
        loaded, normalization, meta = load_checkpoint(path)
    for (name, a), (_, b) in zip(params.named_arrays(), loaded.named_arrays()):
        assert np.array_equal(a, b), name
    assert loaded.config == params.config
    assert normalization.to_dict() == stats().to_dict()
    assert meta == {"epoch": 4}
    x = np.random.default_rng(0).normal(size=(1, 4, 16, 16))
    assert np.array_equal(predict_proba(params, x), predict_proba(loaded, x))


def test_save_is_byte_stable():
    params = build_model(AttMetNetConfig(**CONFIG), seed=1)
    with tempfile.TemporaryDirectory() as tmp:
        first = save_checkpoint(params, os.path.join(tmp, "a"))
        second = save_checkpoint(params, os.path.join(tmp, "b"))
        for i in (0, 1):
            with open(checkpoint_paths(first)[i], "rb") as f1, open(checkpoint_paths(second)[i], "rb") as f2:
                assert f1.read() == f2.read()


def test_truncated_payload():
    params = build_model(AttMetNetConfig(**CONFIG), seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(params, os.path.join(tmp, "model"))
        bin_path = checkpoint_paths(path)[1]
        with open(bin_path, "rb") as f:
            raw = f.read()
        with open(bin_path, "wb") as f:
            f.write(raw[:100])
        try:
            load_checkpoint(path)
        except CheckpointError as e:
            assert "payload length mismatch" in str(e)
        else:
            raise AssertionError("expected CheckpointError")


def test_shape_disagreement_and_magic():
    params = build_model(AttMetNetConfig(**CONFIG), seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(params, os.path.join(tmp, "model"))
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)

        manifest["config"]["in_channels"] = 5
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f)
        try:
            load_checkpoint(path)
        except CheckpointError as e:
            assert "config implies" in str(e)
        else:
            raise AssertionError("expected CheckpointError")

        manifest["magic"] = "NOPE"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f)
        try:
            load_checkpoint(path)
        except CheckpointError as e:
            assert "bad magic" in str(e)
        else:
            raise AssertionError("expected CheckpointError")


def test_missing_files():
    try:
        load_checkpoint("/nonexistent/model.ckpt.json")
    except CheckpointError:
        pass
    else:
        raise AssertionError("expected CheckpointError")


def run_all_tests():
    print("=" * 60)
    print("💾 Checkpoint Tests")
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
