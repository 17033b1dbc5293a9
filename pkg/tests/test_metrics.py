#!/usr/bin/env python3
"""
Metrics tests
- connected components against a flood-fill oracle
- the strict "larger than 90 pixels" scene rule
- scene confusion ratios, pixel mIoU and the report
"""

import os
import sys
import json
import tempfile

import numpy as np
from scipy import ndimage

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from plumenet.metrics import (  # noqa: E402
    MetricsReport, UnionFind, build_report, connected_components, largest_region, pixel_metrics,
    scene_label, scene_metrics,
)

STRUCTURE = {4: ndimage.generate_binary_structure(2, 1), 8: ndimage.generate_binary_structure(2, 2)}


def oracle_sizes(values, connectivity):
    labels, count = ndimage.label(values, structure=STRUCTURE[connectivity])
    return sorted(int((labels == i).sum()) for i in range(1, count + 1))


# =================== Components ===================

def test_union_find_min_root():
    uf = UnionFind()
    for _ in range(5):
        uf.make_label()
    uf.union(4, 2)
    uf.union(2, 3)
    assert uf.find(4) == 2 and uf.find(3) == 2
    assert uf.union(1, 3) == 1


def test_empty_mask_has_no_regions():
    labels, sizes = connected_components(np.zeros((5, 5), dtype=bool))
    assert sizes == []
    assert not labels.any()
    assert largest_region(np.zeros((5, 5), dtype=bool)) == 0


def test_checkerboard_connectivity():
    board = (np.add.outer(np.arange(6), np.arange(6)) % 2 == 0)
    assert connected_components(board, 8)[1] == [18]
    assert connected_components(board, 4)[1] == [1] * 18


def test_diagonal_blocks():
    values = np.zeros((6, 6), dtype=bool)
    values[0:3, 0:3] = True
    values[3:6, 3:6] = True
    assert connected_components(values, 8)[1] == [18]
    assert connected_components(values, 4)[1] == [9, 9]


def test_matches_flood_fill_oracle():
    rng = np.random.default_rng(0)
    for trial in range(12):
        values = rng.uniform(size=(int(rng.integers(1, 20)), int(rng.integers(1, 20)))) < 0.45
        for connectivity in (4, 8):
            labels, sizes = connected_components(values, connectivity)
            assert sorted(sizes) == oracle_sizes(values, connectivity)
            assert np.array_equal(labels > 0, values)


def test_labels_in_first_occurrence_order():
    values = np.random.default_rng(1).uniform(size=(16, 16)) < 0.5
    labels, _ = connected_components(values, 4)
    seen = [v for v in labels.reshape(-1) if v]
    firsts = list(dict.fromkeys(seen))
    assert firsts == list(range(1, len(firsts) + 1))


# =================== Scene rule ===================

def test_scene_rule_is_strict():
    mask = np.zeros((20, 20), dtype=bool)
    mask.reshape(-1)[:91] = True
    assert largest_region(mask) == 91
    assert scene_label(mask, 90)
    mask.reshape(-1)[90] = False
    assert largest_region(mask) == 90
    assert not scene_label(mask, 90)


def test_scattered_pixels_are_not_a_plume():
    mask = np.zeros((40, 40), dtype=bool)
    mask[::2, ::4] = True
    mask.reshape(-1)[np.flatnonzero(mask)[91:]] = False
    assert mask.sum() == 91
    assert not scene_label(mask, 90, connectivity=8)


# =================== Scene / pixel metrics ===================

def test_scene_metrics_hand_confusion():
    m = scene_metrics([1, 1, 0, 0], [1, 0, 1, 0])
    for value in (m.precision, m.recall, m.accuracy, m.f1, m.fpr, m.fnr):
        assert value == 0.5


def test_scene_metrics_perfect_and_undefined():
    perfect = scene_metrics([True, False], [True, False])
    assert perfect.accuracy == 1.0 and perfect.fpr == 0.0 and perfect.fnr == 0.0
    negatives = scene_metrics([False, True], [False, False])
    assert negatives.recall is None
    assert negatives.balanced_accuracy is None
    assert negatives.fpr == 0.5


def test_pixel_miou_conventions():
    mask = np.random.default_rng(2).uniform(size=(8, 8)) > 0.5
    assert pixel_metrics([mask], [mask]) == (1.0, 1.0)
    empty = np.zeros((4, 4), dtype=bool)
    assert pixel_metrics([empty], [empty])[0] == 1.0


def test_pixel_miou_hand_value():
    pred = np.zeros((4, 4), dtype=bool)
    truth = np.zeros((4, 4), dtype=bool)
    pred[:, 1] = True
    truth[:, 2] = True
    # plume IoU 0, background IoU 8 / 16
    miou, balanced = pixel_metrics([pred], [truth])
    assert miou == 0.25
    assert balanced == (0.0 + 8 / 12) / 2.0
    assert pixel_metrics([pred], [truth], "foreground")[0] == 0.0


def test_build_report_oracle_predictions():
    rng = np.random.default_rng(3)
    truths = []
    for i in range(4):
        mask = np.zeros((16, 16), dtype=bool)
        if i % 2 == 0:
            r, c = rng.integers(0, 6, size=2)
            mask[r:r + 10, c:c + 10] = True
        truths.append(mask)
    labels = [m.sum() > 0 for m in truths]
    report = build_report(truths, truths, labels, min_pixels=90)
    assert report.scene.accuracy == 1.0
    assert report.scene.recall == 1.0
    assert report.pixel_miou == 1.0
    assert report.n_scenes == 4

    zeros = [np.zeros((16, 16), dtype=bool)] * 4
    blank = build_report(zeros, truths, labels)
    assert blank.scene.recall == 0.0 and blank.scene.fpr == 0.0


def test_report_json_and_table():
    report = build_report([np.zeros((4, 4), dtype=bool)], [np.zeros((4, 4), dtype=bool)], [False])
    data = report.to_dict()
    assert data["recall"] is None
    assert "undefined" in report.table()
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "metrics.json")
        report.save(path)
        with open(path, "r", encoding="utf-8") as f:
            loaded = MetricsReport.from_dict(json.load(f))
    assert loaded.to_dict() == data


# =================== Randomized properties ===================

def test_matches_scipy_labeling_on_thousand_masks():
    rng = np.random.default_rng(4)
    for trial in range(1000):
        values = rng.uniform(size=(32, 32)) < rng.uniform(0.2, 0.7)
        for connectivity in (4, 8):
            labels, sizes = connected_components(values, connectivity)
            expected, count = ndimage.label(values, structure=STRUCTURE[connectivity])
            assert len(sizes) == count, (trial, connectivity)
            # same partition: every (ours, scipy) label pair occurs once per region
            pairs = set(zip(labels[values].tolist(), expected[values].tolist()))
            assert len(pairs) == count, (trial, connectivity)
            assert sorted(sizes) == oracle_sizes(values, connectivity)


def test_scene_label_monotone_in_threshold_and_mask_growth():
    rng = np.random.default_rng(5)
    for _ in range(50):
        mask = rng.uniform(size=(24, 24)) < rng.uniform(0.1, 0.6)
        verdicts = [scene_label(mask, n) for n in range(0, 200, 10)]
        assert all(a >= b for a, b in zip(verdicts, verdicts[1:]))
        grown = mask | (rng.uniform(size=mask.shape) < 0.1)
        assert largest_region(grown) >= largest_region(mask)
        for n in (10, 40, 90):
            assert scene_label(grown, n) or not scene_label(mask, n)


def test_scene_metrics_accepts_arrays():
    m = scene_metrics(np.array([True, False]), np.array([True, True]))
    assert m.recall == 0.5
    assert m.tp == 1 and m.fn == 1
    assert m.fpr is None


def test_pixel_miou_symmetric_balanced_accuracy_not():
    rng = np.random.default_rng(6)
    for _ in range(30):
        preds = [rng.uniform(size=(12, 12)) < 0.3 for _ in range(3)]
        truths = [rng.uniform(size=(12, 12)) < 0.3 for _ in range(3)]
        assert pixel_metrics(preds, truths)[0] == pixel_metrics(truths, preds)[0]
        _, balanced = pixel_metrics(preds, truths)
        tp = sum(int((p & t).sum()) for p, t in zip(preds, truths))
        fn = sum(int((~p & t).sum()) for p, t in zip(preds, truths))
        fp = sum(int((p & ~t).sum()) for p, t in zip(preds, truths))
        tn = sum(int((~p & ~t).sum()) for p, t in zip(preds, truths))
        recall, fpr = tp / (tp + fn), fp / (fp + tn)
        assert abs(balanced - (recall + 1.0 - fpr) / 2.0) < 1e-12

    pred = np.zeros((4, 4), dtype=bool)
    truth = np.zeros((4, 4), dtype=bool)
    pred.reshape(-1)[:6] = True
    truth.reshape(-1)[:2] = True
    forward = pixel_metrics([pred], [truth])[1]
    swapped = pixel_metrics([truth], [pred])[1]
    assert abs(forward - (1.0 + 10 / 14) / 2.0) < 1e-12
    assert abs(swapped - (2 / 6 + 1.0) / 2.0) < 1e-12
    assert forward != swapped


def run_all_tests():
    print("=" * 60)
    print("📊 Metrics Tests")
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
