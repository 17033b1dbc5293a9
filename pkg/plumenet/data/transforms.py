"""
Patch transforms - aligned cropping, right-angle rotation + band noise
augmentation, and assembly of the normalized network input
"""

import logging
from dataclasses import replace
from typing import Optional, Tuple

import numpy as np

from plumenet.config_manager import AugmentConfig, SENTINEL2_BANDS
from plumenet.data.manifest import NormalizationStats
from plumenet.errors import DataError
from plumenet.spectral import NDMI_BAND, MultispectralPatch, PlumeMask, drop_ndmi, ndmi_plane

logger = logging.getLogger(__name__)

CROP_RETRIES = 16


def _crop_arrays(patch: MultispectralPatch, mask: PlumeMask, top: int, left: int,
                 size: int) -> Tuple[MultispectralPatch, PlumeMask]:
    bands = patch.bands[:, top:top + size, left:left + size].copy()
    values = mask.values[top:top + size, left:left + size].copy()
    return replace(patch, bands=bands), PlumeMask(values, mask.patch_id)


def center_offset(height: int, width: int, size: int) -> Tuple[int, int]:
    return (height - size) // 2, (width - size) // 2


def crop(patch: MultispectralPatch, mask: PlumeMask, mode: str = "random", size: int = 128,
         rng: Optional[np.random.Generator] = None) -> Tuple[MultispectralPatch, PlumeMask]:
    """
    Aligned crop of patch and mask.

    ``random`` draws offsets uniformly; when the source mask has positives,
    crops that keep none of them are redrawn up to CROP_RETRIES times, then
    an offset covering a randomly chosen positive pixel is used.
    """
    h, w = patch.height, patch.width
    if mask.shape != (h, w):
        raise DataError(f"mask shape {mask.shape} does not match patch {h}x{w}")
    if h < size or w < size:
        raise DataError(f"source {h}x{w} is smaller than crop size {size}")
    if mode == "center":
        top, left = center_offset(h, w, size)
        return _crop_arrays(patch, mask, top, left, size)
    if mode != "random":
        raise DataError(f"unknown crop mode {mode!r}")
    if rng is None:
        raise DataError("random crop needs an rng")

    positives = mask.values.any()
    for _ in range(CROP_RETRIES):
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        if not positives or mask.values[top:top + size, left:left + size].any():
            return _crop_arrays(patch, mask, top, left, size)

    rows, cols = np.nonzero(mask.values)
    pick = int(rng.integers(0, len(rows)))
    r, c = int(rows[pick]), int(cols[pick])
    top = int(rng.integers(max(0, r - size + 1), min(r, h - size) + 1))
    left = int(rng.integers(max(0, c - size + 1), min(c, w - size) + 1))
    logger.debug(f"[DATA] Crop fell back to positive-covering offset ({top}, {left})")
    return _crop_arrays(patch, mask, top, left, size)


def rotate(patch: MultispectralPatch, mask: PlumeMask, k: int) -> Tuple[MultispectralPatch, PlumeMask]:
    """k quarter turns, applied identically to every band and the mask"""
    bands = np.ascontiguousarray(np.rot90(patch.bands, k, axes=(1, 2)))
    values = np.ascontiguousarray(np.rot90(mask.values, k))
    return replace(patch, bands=bands), PlumeMask(values, mask.patch_id)


def augment(patch: MultispectralPatch, mask: PlumeMask, rng: np.random.Generator,
            config: AugmentConfig, band_std: Optional[np.ndarray] = None) -> Tuple[MultispectralPatch, PlumeMask]:
    """
    Random right-angle rotation, then zero-mean Gaussian noise on the
    spectral bands with per-band sigma = noise_frac * band_std. NDMI, if
    present, is recomputed from the noised B11/B12.
    """
    if patch.height != patch.width:
        raise DataError(f"augment needs a square patch, got {patch.height}x{patch.width}")
    if not config.enabled:
        return patch, mask

    had_ndmi = patch.has_ndmi
    base = drop_ndmi(patch)

    k = int(rng.integers(4)) if config.rotate else 0
    base, mask = rotate(base, mask, k)

    if config.noise_frac > 0:
        if band_std is None:
            raise DataError("augmentation noise needs per-band std from the train split")
        sigma = config.noise_frac * np.asarray(band_std, dtype=np.float64)[:base.channels]
        noise = rng.standard_normal(base.bands.shape) * sigma[:, None, None]
        base = replace(base, bands=base.bands + noise)

    if had_ndmi:
        ndmi = ndmi_plane(base.band("B11"), base.band("B12"))
        base = replace(base, bands=np.concatenate([base.bands, ndmi[None]], axis=0),
                       band_names=list(base.band_names) + [NDMI_BAND])
    return base, mask


def network_input(patch: MultispectralPatch, in_channels: int,
                  normalization: Optional[NormalizationStats]) -> np.ndarray:
    """
    C x H x W float array for the network: raw bands, NDMI from the raw
    B11/B12 when 13 channels are wanted, then the z-score.
    """
    base = drop_ndmi(patch)
    if in_channels == len(SENTINEL2_BANDS) + 1:
        planes = np.concatenate([base.bands, ndmi_plane(base.band("B11"), base.band("B12"))[None]], axis=0)
        names = list(base.band_names) + [NDMI_BAND]
    elif in_channels == len(SENTINEL2_BANDS):
        planes, names = base.bands, list(base.band_names)
    else:
        raise DataError(f"patches provide 12 or 13 channels, model expects {in_channels}")
    if normalization is None:
        return planes.copy()
    return normalization.apply(planes, names)
