"""
Trainer Service
Epoch loop: resample, batch, forward in train mode, loss, backward, Adam
step; then an eval-mode validation pass, the plateau scheduler and
best / final checkpoint bookkeeping
"""

import os
import time
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

import numpy as np
import psutil

from plumenet.config_manager import AttMetNetConfig, AugmentConfig, EvalConfig, SENTINEL2_BANDS, TrainConfig
from plumenet.core.tensor import Graph, Tensor, backward
from plumenet.data.manifest import DatasetManifest, NormalizationStats, compute_normalization
from plumenet.data.sampler import epoch_rng, epoch_sampler
from plumenet.data.transforms import augment, crop, network_input
from plumenet.errors import DataError, TrainingError
from plumenet.loss import loss_fn
from plumenet.metrics import scene_label, scene_metrics
from plumenet.model.attmetnet import forward
from plumenet.model.checkpoint import save_checkpoint
from plumenet.model.params import AttMetNetParams, build_model
from plumenet.services.optimizer import Adam, PlateauState, clip_grad_norm, plateau_scheduler
from plumenet.services.training_history import TIMESTAMP_FORMAT, EpochRecord, TrainHistory
from plumenet.spectral import MultispectralPatch, PlumeMask

logger = logging.getLogger(__name__)

# validation crops draw from their own stream so they never shift training draws
_VAL_STREAM = 1


@dataclass
class TrainResult:
    params: AttMetNetParams
    best_params: AttMetNetParams
    history: TrainHistory
    normalization: NormalizationStats
    best_epoch: int
    best_val_loss: float
    checkpoint: Optional[str] = None
    best_checkpoint: Optional[str] = None


class TrainerService:
    """Trains one AttMetNet on a manifest"""

    def __init__(self, model_config: AttMetNetConfig, train_config: TrainConfig,
                 augment_config: Optional[AugmentConfig] = None, eval_config: Optional[EvalConfig] = None):
        self.model_config = model_config
        self.config = train_config
        self.augment_config = augment_config or AugmentConfig()
        self.eval_config = eval_config or EvalConfig()
        self._cache: Dict[str, Tuple[MultispectralPatch, PlumeMask]] = {}
        self._process = psutil.Process(os.getpid())
        logger.info(
            f"[TRAINER] lr={train_config.lr} epochs={train_config.epochs} batch={train_config.batch_size} "
            f"loss={train_config.loss.kind} seed={train_config.seed}"
        )

    # =================== Data ===================

    def _scene(self, manifest: DatasetManifest, entry_id: str) -> Tuple[MultispectralPatch, PlumeMask]:
        if entry_id not in self._cache:
            entry = manifest.get(entry_id)
            patch = manifest.load_patch(entry)
            mask = manifest.load_mask(entry, patch.bands.shape[1:])
            self._cache[entry_id] = (patch, mask)
        return self._cache[entry_id]

    def _batch(self, manifest: DatasetManifest, ids: List[str], normalization: NormalizationStats,
               rng: np.random.Generator, crop_mode: str, augmenting: bool) -> Tuple[np.ndarray, np.ndarray]:
        size = self.model_config.patch_size
        band_std = normalization.band_std(SENTINEL2_BANDS)
        xs, ys = [], []
        for entry_id in ids:
            patch, mask = self._scene(manifest, entry_id)
            patch, mask = crop(patch, mask, crop_mode, size, rng)
            if augmenting:
                patch, mask = augment(patch, mask, rng, self.augment_config, band_std)
            xs.append(network_input(patch, self.model_config.in_channels, normalization))
            ys.append(mask.values.astype(np.float64)[None])
        return np.stack(xs), np.stack(ys)

    # =================== Loop ===================

    def _validate(self, params: AttMetNetParams, manifest: DatasetManifest, normalization: NormalizationStats,
                  epoch: int, compute_loss) -> Tuple[float, Optional[float]]:
        cfg = self.config
        entries = manifest.split(cfg.val_split)
        rng = np.random.default_rng([cfg.seed, epoch, _VAL_STREAM])
        total, count = 0.0, 0
        pred_labels, true_labels = [], []
        ecfg = self.eval_config
        for start in range(0, len(entries), cfg.batch_size):
            chunk = entries[start:start + cfg.batch_size]
            x, y = self._batch(manifest, [e.id for e in chunk], normalization, rng, cfg.val_crop, False)
            out = forward(params, Tensor(x), mode="eval")
            total += compute_loss(out.prob, y).item() * len(chunk)
            count += len(chunk)
            for i, entry in enumerate(chunk):
                pred = out.prob.data[i, 0] > ecfg.prob_threshold
                pred_labels.append(scene_label(pred, ecfg.min_pixels, ecfg.connectivity))
                true_labels.append(entry.is_plume)
        return total / count, scene_metrics(pred_labels, true_labels).f1

    def train(self, manifest: DatasetManifest, out_dir: Optional[str] = None,
              params: Optional[AttMetNetParams] = None) -> TrainResult:
        cfg = self.config
        if not manifest.split(cfg.train_split):
            raise DataError(f"train split '{cfg.train_split}' is empty")
        if not manifest.split(cfg.val_split):
            raise DataError(f"val split '{cfg.val_split}' is empty")
        manifest.validate()
        normalization = manifest.normalization or compute_normalization(manifest, cfg.train_split)

        params = params or build_model(self.model_config, cfg.seed)
        optimizer = Adam(params.parameters(), cfg.lr, cfg.optimizer)
        scheduler = PlateauState.from_config(cfg.lr, cfg.scheduler)
        compute_loss = loss_fn(cfg.loss)
        history = TrainHistory()
        best_params = params.copy()
        best_epoch, best_val = -1, math.inf
        started = time.perf_counter()

        for epoch in range(cfg.epochs):
            epoch_start = time.perf_counter()
            rng = epoch_rng(cfg.seed, epoch)
            ids = epoch_sampler(manifest, cfg.train_split, cfg.neg_ratio, rng)
            lr = optimizer.lr
            total, seen = 0.0, 0
            for batch_index, start in enumerate(range(0, len(ids), cfg.batch_size)):
                chunk = ids[start:start + cfg.batch_size]
                x, y = self._batch(manifest, chunk, normalization, rng, "random", self.augment_config.enabled)
                optimizer.zero_grad()
                with Graph() as graph:
                    out = forward(params, Tensor(x), mode="train")
                    loss = compute_loss(out.prob, y)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingError(epoch, batch_index, f"non-finite loss {value}")
                backward(graph, loss)
                if cfg.max_grad_norm is not None:
                    clip_grad_norm(optimizer.params, cfg.max_grad_norm)
                optimizer.step()
                total += value * len(chunk)
                seen += len(chunk)
            train_loss = total / seen

            val_loss, val_f1 = self._validate(params, manifest, normalization, epoch, compute_loss)
            if not math.isfinite(val_loss):
                raise TrainingError(epoch, -1, f"non-finite validation loss {val_loss}")
            if val_loss < best_val:
                best_val, best_epoch = val_loss, epoch
                best_params = params.copy()
            scheduler, optimizer.lr = plateau_scheduler(scheduler, val_loss)

            wall = time.perf_counter() - epoch_start
            rss_mb = self._process.memory_info().rss / (1024 * 1024)
            history.record(EpochRecord(epoch, train_loss, val_loss, lr, val_f1),
                           {"timestamp": datetime.now(timezone.utc).strftime(TIMESTAMP_FORMAT),
                            "wall_s": round(wall, 3), "rss_mb": round(rss_mb, 1)})
            f1_text = "undefined" if val_f1 is None else f"{val_f1:.4f}"
            logger.info(
                f"[TRAINER] epoch {epoch + 1}/{cfg.epochs} train_loss={train_loss:.6f} val_loss={val_loss:.6f} "
                f"lr={lr:.3e} val_f1={f1_text} time={wall:.1f}s rss={rss_mb:.0f}MB"
            )

        history.meta = {
            "wall_time_s": round(time.perf_counter() - started, 3),
            "best_epoch": best_epoch,
            "best_val_loss": best_val if math.isfinite(best_val) else None,
        }
        result = TrainResult(params, best_params, history, normalization, best_epoch, best_val)
        if out_dir:
            self.save_outputs(result, out_dir)
        return result

    def save_outputs(self, result: TrainResult, out_dir: str):
        """final + best checkpoints, history.csv and resources.jsonl"""
        os.makedirs(out_dir, exist_ok=True)
        meta = {"seed": self.config.seed, "epochs": self.config.epochs, "loss": self.config.loss.kind}
        result.checkpoint = save_checkpoint(result.params, os.path.join(out_dir, "final"),
                                            result.normalization, {**meta, "role": "final"})
        result.best_checkpoint = save_checkpoint(result.best_params, os.path.join(out_dir, "best"),
                                                 result.normalization,
                                                 {**meta, "role": "best", "best_epoch": result.best_epoch})
        result.history.save_csv(os.path.join(out_dir, "history.csv"))
        result.history.save_resources(os.path.join(out_dir, "resources.jsonl"))


def train(model_config: AttMetNetConfig, train_config: TrainConfig, manifest: DatasetManifest,
          augment_config: Optional[AugmentConfig] = None, eval_config: Optional[EvalConfig] = None,
          out_dir: Optional[str] = None) -> TrainResult:
    return TrainerService(model_config, train_config, augment_config, eval_config).train(manifest, out_dir)
