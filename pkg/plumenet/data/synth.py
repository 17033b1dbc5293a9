"""
Synthetic Gaussian-plume scenes and corpora

Background:  band_b = base_b + base_b * T(x, y) + n_b(x, y): the per-band base
reflectance plus clipped Gaussian noise n_b (reflectance units, per band and
pixel). T is a smooth relative texture shared by all bands; texture_std = 0
leaves base + noise. Both are clipped at three sigma.
Plume:       B12' = B12 * (1 - amplitude * G(x, y)) with G a unit-peak
anisotropic Gaussian (``gaussian`` profile), or amplitude applied uniformly
inside the mask (``flat`` profile). Mask = G > mask_cutoff.
The reference pass is the plume-free background, dated one revisit earlier.
"""

import os
import logging
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from plumenet.config_manager import SENTINEL2_BANDS, SynthConfig
from plumenet.data.manifest import DatasetManifest, ManifestEntry, compute_normalization, save_manifest
from plumenet.errors import DataError
from plumenet.mbmp import PassPair
from plumenet.spectral import MultispectralPatch, PlumeMask, save_mask, save_patch

logger = logging.getLogger(__name__)

REVISIT_DAYS = 5
TEXTURE_SMOOTHING = 4.0
_EPOCH = datetime(2023, 1, 1, tzinfo=timezone.utc)


@dataclass
class SynthScene:
    patch: MultispectralPatch
    mask: PlumeMask
    pair: PassPair
    plume_field: np.ndarray
    center: Tuple[float, float]


def plume_field(size: int, center: Tuple[float, float], sigma_x: float, sigma_y: float) -> np.ndarray:
    """Unit-peak Gaussian on the pixel grid; center is (row, col)"""
    rows = np.arange(size, dtype=np.float64)[:, None]
    cols = np.arange(size, dtype=np.float64)[None, :]
    dr = rows - center[0]
    dc = cols - center[1]
    return np.exp(-(dr ** 2 / (2.0 * sigma_y ** 2) + dc ** 2 / (2.0 * sigma_x ** 2)))


def _clipped_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    if std == 0:
        return np.zeros(shape)
    return np.clip(rng.standard_normal(shape) * std, -3.0 * std, 3.0 * std)


def _texture(rng: np.random.Generator, size: int, std: float) -> np.ndarray:
    if std == 0:
        return np.zeros((size, size))
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), TEXTURE_SMOOTHING, mode="wrap")
    spread = field.std()
    if spread > 0:
        field = field / spread
    return np.clip(field * std, -3.0 * std, 3.0 * std)


def _geo(rng: np.random.Generator) -> Tuple[Dict, Dict]:
    lat = float(np.round(rng.uniform(25.0, 40.0), 5))
    lon = float(np.round(rng.uniform(-110.0, 60.0), 5))
    when = _EPOCH + timedelta(days=int(rng.integers(0, 730)), seconds=int(rng.integers(0, 86400)))
    ref_when = when - timedelta(days=REVISIT_DAYS)
    fmt = "%Y-%m-%dT%H:%M:%SZ"
    return (
        {"lat": lat, "lon": lon, "timestamp": when.strftime(fmt)},
        {"lat": lat, "lon": lon, "timestamp": ref_when.strftime(fmt)},
    )


def synth_scene(config: SynthConfig, rng: Optional[np.random.Generator] = None,
                positive: bool = True, name: Optional[str] = None) -> SynthScene:
    """One 12-band scene, its mask and the (plume, reference) pass pair"""
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    size = config.size
    base = np.asarray(config.band_base, dtype=np.float64)

    texture = _texture(rng, size, config.texture_std)
    noise = _clipped_normal(rng, (len(SENTINEL2_BANDS), size, size), config.noise_std)
    background = np.maximum(base[:, None, None] * (1.0 + texture[None]) + noise, 0.0)

    if config.center is not None:
        center = (float(config.center[0]), float(config.center[1]))
    else:
        center = (float(rng.uniform(size / 4, 3 * size / 4)), float(rng.uniform(size / 4, 3 * size / 4)))
    geo_plume, geo_ref = _geo(rng)

    amplitude = config.amplitude if positive else 0.0
    field = plume_field(size, center, config.sigma_x, config.sigma_y)
    if amplitude > 0:
        mask_values = field > config.mask_cutoff
        absorption = field if config.profile == "gaussian" else mask_values.astype(np.float64)
        plume_bands = background.copy()
        b12 = SENTINEL2_BANDS.index("B12")
        plume_bands[b12] = background[b12] * (1.0 - amplitude * absorption)
    else:
        mask_values = np.zeros((size, size), dtype=bool)
        plume_bands = background.copy()

    patch = MultispectralPatch(plume_bands, list(SENTINEL2_BANDS), config.resolution_m, geo_plume, name)
    ref = MultispectralPatch(background, list(SENTINEL2_BANDS), config.resolution_m, geo_ref,
                             f"{name}_ref" if name else None)
    mask = PlumeMask(mask_values, name)
    return SynthScene(patch, mask, PassPair(patch, ref), field, center)


def _assign_splits(ids: List[str], rng: np.random.Generator) -> Dict[str, str]:
    """~80/10/10; val and test each get one member whenever there are at least 3"""
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_val = int(round(0.1 * n))
    n_test = int(round(0.1 * n))
    if n >= 3:
        n_val = max(n_val, 1)
        n_test = max(n_test, 1)
    splits = {}
    for i, scene_id in enumerate(order):
        if i < n_val:
            splits[scene_id] = "val"
        elif i < n_val + n_test:
            splits[scene_id] = "test"
        else:
            splits[scene_id] = "train"
    return splits


def synth_corpus(out_dir: str, n_scenes: int, config: SynthConfig, seed: int = 0,
                 overfit: bool = False) -> DatasetManifest:
    """
    Write a corpus directory: patches/, masks/, refs/, manifest.jsonl and
    norm_stats.json. Splits are assigned per class so positives land in
    every split. With ``overfit`` every scene goes to ``train`` and the
    caller validates on that same split.
    """
    if n_scenes < 1:
        raise DataError("n_scenes must be >= 1")
    rng = np.random.default_rng(seed)
    n_pos = int(round(config.positive_fraction * n_scenes))
    labels = [i < n_pos for i in range(n_scenes)]
    labels = [labels[i] for i in rng.permutation(n_scenes)]

    entries = []
    for i, positive in enumerate(labels):
        scene_id = f"scene_{i:04d}"
        scene = synth_scene(config, rng, positive=positive, name=scene_id)
        save_patch(scene.patch, os.path.join(out_dir, "patches", scene_id))
        save_mask(scene.mask, os.path.join(out_dir, "masks", scene_id))
        save_patch(scene.pair.ref_pass, os.path.join(out_dir, "refs", scene_id))
        entries.append(ManifestEntry(
            id=scene_id,
            patch_path=f"patches/{scene_id}.json",
            label="plume" if positive else "no_plume",
            split="train",
            mask_path=f"masks/{scene_id}.json",
            ref_path=f"refs/{scene_id}.json",
        ))

    if not overfit:
        pos_ids = [e.id for e in entries if e.label == "plume"]
        neg_ids = [e.id for e in entries if e.label != "plume"]
        splits = _assign_splits(pos_ids, rng)
        splits.update(_assign_splits(neg_ids, rng))
        entries = [replace(e, split=splits[e.id]) for e in entries]

    manifest = DatasetManifest(entries, os.path.abspath(out_dir))
    manifest.normalization = compute_normalization(manifest, "train")
    save_manifest(manifest, out_dir)
    counts = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    logger.info(f"[SYNTH] Wrote {n_scenes} scenes ({n_pos} plume) to {out_dir}: {counts}")
    return manifest
