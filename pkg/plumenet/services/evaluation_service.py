"""
Evaluation Service
Center-crop, eval-mode forward, binarization and the full MetricsReport
over one manifest split
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from plumenet.config_manager import EvalConfig
from plumenet.data.manifest import DatasetManifest, ManifestEntry, NormalizationStats
from plumenet.data.transforms import crop, network_input
from plumenet.errors import DataError
from plumenet.metrics import MetricsReport, build_report, largest_region
from plumenet.model.attmetnet import predict_proba
from plumenet.model.checkpoint import load_checkpoint
from plumenet.model.params import AttMetNetParams
from plumenet.spectral import MultispectralPatch, PlumeMask

logger = logging.getLogger(__name__)

EVAL_BATCH = 8


@dataclass
class ScenePrediction:
    entry_id: str
    prob: np.ndarray
    mask: PlumeMask
    truth: PlumeMask
    largest_region: int
    plume: bool
    geo: Optional[dict] = None


def predict_patches(params: AttMetNetParams, normalization: Optional[NormalizationStats],
                    patches: Sequence[MultispectralPatch], attention: str = "gated") -> List[np.ndarray]:
    """H x W probability planes, one per patch, in input order"""
    cfg = params.config
    probs: List[np.ndarray] = []
    for start in range(0, len(patches), EVAL_BATCH):
        chunk = patches[start:start + EVAL_BATCH]
        x = np.stack([network_input(p, cfg.in_channels, normalization) for p in chunk])
        out = predict_proba(params, x, attention)
        probs.extend(out[i, 0] for i in range(out.shape[0]))
    return probs


class EvaluationService:
    """Scores a parameter set on a manifest split"""

    def __init__(self, eval_config: Optional[EvalConfig] = None):
        self.config = eval_config or EvalConfig()
        logger.debug("[EVAL] EvaluationService initialized")

    def _load_split(self, manifest: DatasetManifest, split: str,
                    size: int) -> Tuple[List[ManifestEntry], List[MultispectralPatch], List[PlumeMask]]:
        entries = manifest.split(split)
        if not entries:
            raise DataError(f"split '{split}' is empty")
        manifest.validate()
        patches, truths = [], []
        for entry in entries:
            patch = manifest.load_patch(entry)
            truth = manifest.load_mask(entry, patch.bands.shape[1:])
            patch, truth = crop(patch, truth, "center", size)
            patches.append(patch)
            truths.append(truth)
        return entries, patches, truths

    def predict_split(self, params: AttMetNetParams, normalization: Optional[NormalizationStats],
                      manifest: DatasetManifest, split: str, attention: str = "gated") -> List[ScenePrediction]:
        cfg = self.config
        entries, patches, truths = self._load_split(manifest, split, params.config.patch_size)
        probs = predict_patches(params, normalization, patches, attention)
        out = []
        for entry, patch, truth, prob in zip(entries, patches, truths, probs):
            mask = PlumeMask(prob > cfg.prob_threshold, entry.id)
            largest = largest_region(mask, cfg.connectivity)
            out.append(ScenePrediction(entry.id, prob, mask, truth, largest,
                                       largest > cfg.min_pixels, patch.geo))
        return out

    def report(self, predictions: Sequence[ScenePrediction], true_labels: Sequence[bool]) -> MetricsReport:
        cfg = self.config
        return build_report([p.mask for p in predictions], [p.truth for p in predictions], true_labels,
                            cfg.min_pixels, cfg.connectivity, cfg.miou_mode)

    def evaluate(self, params: AttMetNetParams, normalization: Optional[NormalizationStats],
                 manifest: DatasetManifest, split: str, attention: str = "gated") -> MetricsReport:
        predictions = self.predict_split(params, normalization, manifest, split, attention)
        labels = [manifest.get(p.entry_id).is_plume for p in predictions]
        return self.report(predictions, labels)

    def evaluate_masks(self, manifest: DatasetManifest, split: str,
                       pred_masks: Sequence[PlumeMask], size: Optional[int] = None) -> MetricsReport:
        """Score externally produced masks (already at crop size) against the split"""
        entries = manifest.split(split)
        if not entries:
            raise DataError(f"split '{split}' is empty")
        manifest.validate()
        if len(pred_masks) != len(entries):
            raise DataError(f"{len(pred_masks)} masks for {len(entries)} scenes in split '{split}'")
        truths = []
        for entry, pred in zip(entries, pred_masks):
            patch = manifest.load_patch(entry)
            truth = manifest.load_mask(entry, patch.bands.shape[1:])
            _, truth = crop(patch, truth, "center", size or pred.shape[0])
            truths.append(truth)
        cfg = self.config
        return build_report(list(pred_masks), truths, [e.is_plume for e in entries],
                            cfg.min_pixels, cfg.connectivity, cfg.miou_mode)

    def evaluate_checkpoint(self, checkpoint: str, manifest: DatasetManifest, split: str) -> MetricsReport:
        params, normalization, _ = load_checkpoint(checkpoint)
        if normalization is None:
            normalization = manifest.normalization
        return self.evaluate(params, normalization, manifest, split)
