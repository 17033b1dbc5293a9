"""
MBMP - multi-band multi-pass retrieval baseline

Single pass:  dR = c * B12 / B11 - 1, with c = sum(B11*B12) / sum(B12^2) over
valid pixels (least-squares fit of c*B12 ~ B11). Two passes are differenced
plume minus reference; negative values mean extra B12 absorption.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from plumenet.config_manager import MBMPConfig
from plumenet.errors import BandError, ConfigError, DataError, ShapeError
from plumenet.metrics import largest_region
from plumenet.spectral import DENOM_FLOOR, MultispectralPatch, PlumeMask

logger = logging.getLogger(__name__)


@dataclass
class PassPair:
    """Plume pass and plume-free reference pass of the same location"""
    plume_pass: MultispectralPatch
    ref_pass: MultispectralPatch

    def __post_init__(self):
        if self.plume_pass.bands.shape[1:] != self.ref_pass.bands.shape[1:]:
            raise ShapeError("PassPair", "H x W", self.plume_pass.bands.shape[1:], self.ref_pass.bands.shape[1:])
        if self.plume_pass.band_names != self.ref_pass.band_names:
            raise BandError("*", "plume and reference passes have different band sets")
        t_plume = (self.plume_pass.geo or {}).get("timestamp")
        t_ref = (self.ref_pass.geo or {}).get("timestamp")
        if t_plume is not None and t_plume == t_ref:
            raise DataError(f"plume and reference passes share timestamp {t_plume}")


def single_pass_fit(patch: MultispectralPatch) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Returns:
        (delta_r, valid, c): retrieval plane with invalid pixels set to 0,
        the validity flags and the fitted scale
    """
    b11 = patch.band("B11")
    b12 = patch.band("B12")
    valid = b11 > DENOM_FLOOR
    if not valid.any():
        raise DataError(f"MBMP: no valid pixels (B11 <= {DENOM_FLOOR}) in {patch.name or 'scene'}")
    num = float(np.sum(b11[valid] * b12[valid]))
    den = float(np.sum(b12[valid] ** 2))
    if den <= 0:
        raise DataError(f"MBMP: B12 is zero over every valid pixel of {patch.name or 'scene'}")
    c = num / den
    delta = np.zeros_like(b11)
    delta[valid] = c * b12[valid] / b11[valid] - 1.0
    return delta, valid, c


def single_pass_mb(patch: MultispectralPatch) -> np.ndarray:
    return single_pass_fit(patch)[0]


def mbmp_retrieval(pair: PassPair) -> np.ndarray:
    """plume-pass retrieval minus reference-pass retrieval"""
    plume, plume_valid, c_plume = single_pass_fit(pair.plume_pass)
    ref, ref_valid, c_ref = single_pass_fit(pair.ref_pass)
    retrieval = plume - ref
    retrieval[~(plume_valid & ref_valid)] = 0.0
    logger.debug(f"[MBMP] c_plume={c_plume:.6f} c_ref={c_ref:.6f}")
    return retrieval


def mbmp_mask(retrieval: np.ndarray, threshold: float = -0.05) -> PlumeMask:
    if threshold >= 0:
        raise ConfigError("mbmp.threshold", f"must be negative, got {threshold}")
    return PlumeMask(np.asarray(retrieval) < threshold)


@dataclass
class MBMPResult:
    retrieval: np.ndarray
    mask: PlumeMask
    largest_region: int
    plume: bool


def detect(pair: PassPair, config: Optional[MBMPConfig] = None) -> MBMPResult:
    """Retrieval, thresholded mask and the contiguous-region scene verdict"""
    config = config or MBMPConfig()
    retrieval = mbmp_retrieval(pair)
    mask = mbmp_mask(retrieval, config.threshold)
    mask.patch_id = pair.plume_pass.name
    largest = largest_region(mask, config.connectivity)
    return MBMPResult(retrieval, mask, largest, largest > config.min_pixels)
