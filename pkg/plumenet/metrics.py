"""
Metrics - connected components, the contiguous-region scene rule, and
scene / pixel level scores

Ratios with a zero denominator are reported as ``None`` ("undefined"),
never as 0 or NaN.
"""

import json
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from plumenet.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

UNDEFINED = "undefined"


class UnionFind:
    """Array-backed disjoint sets; the root of a set is its smallest label"""

    def __init__(self):
        self.parent: List[int] = []

    def make_label(self) -> int:
        label = len(self.parent)
        self.parent.append(label)
        return label

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        # path compression
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> int:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return ri
        if ri > rj:
            ri, rj = rj, ri
        self.parent[rj] = ri
        return ri


def _values(mask) -> np.ndarray:
    values = np.asarray(getattr(mask, "values", mask))
    if values.ndim != 2:
        raise ShapeError("connected_components", "mask rank", 2, values.ndim)
    return values.astype(bool)


def connected_components(mask, connectivity: int = 8) -> Tuple[np.ndarray, List[int]]:
    """
    Two-pass union-find labeling.

    Returns:
        (labels, sizes): int H x W raster with 0 for background and 1..K for
        regions numbered by first occurrence in raster order, and the K
        region sizes in the same order
    """
    if connectivity not in (4, 8):
        raise ConfigError("connectivity", f"must be 4 or 8, got {connectivity}")
    values = _values(mask)
    h, w = values.shape
    provisional = np.zeros((h, w), dtype=np.int64)
    uf = UnionFind()
    uf.make_label()  # 0 is background

    if connectivity == 8:
        offsets = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
    else:
        offsets = ((-1, 0), (0, -1))

    rows = values.tolist()
    prov = provisional.tolist()
    for r in range(h):
        row = rows[r]
        for c in range(w):
            if not row[c]:
                continue
            neighbours = []
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if 0 <= rr and 0 <= cc < w and prov[rr][cc]:
                    neighbours.append(prov[rr][cc])
            if not neighbours:
                prov[r][c] = uf.make_label()
                continue
            label = min(neighbours)
            for other in neighbours:
                label = uf.union(label, other)
            prov[r][c] = label

    # second pass: resolve roots, renumber in first-occurrence order
    provisional = np.asarray(prov, dtype=np.int64).reshape(h, w)
    roots = np.array([uf.find(i) for i in range(len(uf.parent))], dtype=np.int64)
    resolved = roots[provisional]
    unique_roots = np.unique(roots[1:])
    final = np.zeros(len(uf.parent), dtype=np.int64)
    final[unique_roots] = np.arange(1, len(unique_roots) + 1)
    labels = final[resolved]
    counts = np.bincount(labels.reshape(-1), minlength=len(unique_roots) + 1)
    return labels, [int(n) for n in counts[1:]]


def largest_region(mask, connectivity: int = 8) -> int:
    _, sizes = connected_components(mask, connectivity)
    return max(sizes) if sizes else 0


def scene_label(mask, min_pixels: int = 90, connectivity: int = 8) -> bool:
    """True iff the largest contiguous region has strictly more than min_pixels pixels"""
    return largest_region(mask, connectivity) > min_pixels


# =================== Scene level ===================

def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


@dataclass
class SceneMetrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    accuracy: Optional[float] = None
    balanced_accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    fpr: Optional[float] = None
    fnr: Optional[float] = None


def scene_metrics(pred_labels: Sequence[bool], true_labels: Sequence[bool]) -> SceneMetrics:
    if len(pred_labels) != len(true_labels):
        raise ShapeError("scene_metrics", "label count", len(true_labels), len(pred_labels))
    if len(pred_labels) == 0:
        raise ShapeError("scene_metrics", "label count", ">= 1", 0)
    tp = fp = fn = tn = 0
    for p, t in zip(pred_labels, true_labels):
        p, t = bool(p), bool(t)
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    recall = _ratio(tp, tp + fn)
    fpr = _ratio(fp, fp + tn)
    balanced = None if recall is None or fpr is None else (recall + (1.0 - fpr)) / 2.0
    return SceneMetrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        accuracy=_ratio(tp + tn, tp + fp + fn + tn),
        balanced_accuracy=balanced,
        precision=_ratio(tp, tp + fp),
        recall=recall,
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        fpr=fpr,
        fnr=_ratio(fn, fn + tp),
    )


# =================== Pixel level ===================

def _iou(a: np.ndarray, b: np.ndarray) -> float:
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def pixel_metrics(pred_masks: Sequence, truth_masks: Sequence,
                  miou_mode: str = "two_class") -> Tuple[float, Optional[float]]:
    """
    Returns:
        (miou, balanced_accuracy): mIoU averaged per scene then over scenes
        (plume and background classes, or plume only in ``foreground``
        mode); balanced accuracy pooled over every pixel of the corpus
    """
    if len(pred_masks) != len(truth_masks):
        raise ShapeError("pixel_metrics", "mask count", len(truth_masks), len(pred_masks))
    if len(pred_masks) == 0:
        raise ShapeError("pixel_metrics", "mask count", ">= 1", 0)
    if miou_mode not in ("two_class", "foreground"):
        raise ConfigError("miou_mode", f"unknown miou mode {miou_mode}")

    scene_ious = []
    tp = fn = tn = fp = 0
    for pred, truth in zip(pred_masks, truth_masks):
        p = _values(pred)
        t = _values(truth)
        if p.shape != t.shape:
            raise ShapeError("pixel_metrics", "mask shape", t.shape, p.shape)
        plume = _iou(p, t)
        if miou_mode == "two_class":
            scene_ious.append((plume + _iou(~p, ~t)) / 2.0)
        else:
            scene_ious.append(plume)
        tp += int(np.logical_and(p, t).sum())
        fn += int(np.logical_and(~p, t).sum())
        tn += int(np.logical_and(~p, ~t).sum())
        fp += int(np.logical_and(p, ~t).sum())

    miou = float(np.mean(scene_ious))
    tpr = _ratio(tp, tp + fn)
    tnr = _ratio(tn, tn + fp)
    balanced = None if tpr is None or tnr is None else (tpr + tnr) / 2.0
    return miou, balanced


# =================== Report ===================

@dataclass
class MetricsReport:
    scene: SceneMetrics = field(default_factory=SceneMetrics)
    pixel_miou: Optional[float] = None
    pixel_balanced_accuracy: Optional[float] = None
    n_scenes: int = 0

    def to_dict(self) -> Dict:
        """Flat JSON object; undefined ratios become null"""
        out = {"n_scenes": self.n_scenes}
        out.update(asdict(self.scene))
        out["pixel_miou"] = self.pixel_miou
        out["pixel_balanced_accuracy"] = self.pixel_balanced_accuracy
        return out

    @classmethod
    def from_dict(cls, data: Dict) -> "MetricsReport":
        scene = SceneMetrics(**{k: data.get(k) for k in SceneMetrics.__dataclass_fields__})
        return cls(scene, data.get("pixel_miou"), data.get("pixel_balanced_accuracy"),
                   int(data.get("n_scenes", 0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json() + "\n")

    def table(self) -> str:
        """Fixed-order two-column table for stdout"""
        lines = []
        for key, value in self.to_dict().items():
            if value is None:
                shown = UNDEFINED
            elif isinstance(value, float):
                shown = f"{value:.6f}"
            else:
                shown = str(value)
            lines.append(f"{key:<24} {shown}")
        return "\n".join(lines)


def build_report(pred_masks: Sequence, truth_masks: Sequence, true_labels: Sequence[bool],
                 min_pixels: int = 90, connectivity: int = 8,
                 miou_mode: str = "two_class") -> MetricsReport:
    """Scene rule on each predicted mask, then the full report in fixed scene order"""
    pred_labels = [scene_label(m, min_pixels, connectivity) for m in pred_masks]
    scene = scene_metrics(pred_labels, list(true_labels))
    miou, pixel_bacc = pixel_metrics(pred_masks, truth_masks, miou_mode)
    report = MetricsReport(scene, miou, pixel_bacc, len(pred_labels))
    logger.info(
        f"[EVAL] {report.n_scenes} scenes: tp={scene.tp} fp={scene.fp} fn={scene.fn} tn={scene.tn} "
        f"mIoU={miou:.4f}"
    )
    return report
