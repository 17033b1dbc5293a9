"""
Spectral - multispectral patches, masks, NDMI and their on-disk format

A patch or mask is a pair of files: ``<name>.json`` (header) and
``<name>.bin`` (little-endian payload, channel-major).
"""

import os
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from plumenet.config_manager import SENTINEL2_BANDS
from plumenet.errors import BandError, PatchFormatError

logger = logging.getLogger(__name__)

NDMI_BAND = "NDMI"
DENOM_FLOOR = 1e-9

PATCH_MAGIC = "PLMPATCH1"
MASK_MAGIC = "PLMMASK1"

_DTYPES = {"f64": np.dtype("<f8"), "u8": np.dtype("u1")}


@dataclass
class MultispectralPatch:
    """C x H x W reflectance raster with band names and optional geo metadata"""
    bands: np.ndarray
    band_names: List[str]
    resolution_m: float = 20.0
    geo: Optional[Dict[str, Any]] = None
    name: Optional[str] = None

    def __post_init__(self):
        self.bands = np.asarray(self.bands, dtype=np.float64)
        self.band_names = list(self.band_names)
        validate_band_names(self.band_names, self.bands.shape[0] if self.bands.ndim == 3 else -1)
        if self.bands.ndim != 3:
            raise BandError("*", f"bands must be C x H x W, got shape {self.bands.shape}")

    @property
    def channels(self) -> int:
        return self.bands.shape[0]

    @property
    def height(self) -> int:
        return self.bands.shape[1]

    @property
    def width(self) -> int:
        return self.bands.shape[2]

    @property
    def has_ndmi(self) -> bool:
        return self.band_names[-1] == NDMI_BAND

    def band(self, name: str) -> np.ndarray:
        try:
            return self.bands[self.band_names.index(name)]
        except ValueError:
            raise BandError(name)


@dataclass
class PlumeMask:
    """Binary H x W raster; ground truth or thresholded prediction"""
    values: np.ndarray
    patch_id: Optional[str] = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise PatchFormatError(self.patch_id or "<mask>", f"mask must be H x W, got shape {values.shape}")
        if values.dtype != bool:
            if not np.isin(values, (0, 1)).all():
                raise PatchFormatError(self.patch_id or "<mask>", "mask values must be 0 or 1")
            values = values.astype(bool)
        self.values = values

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def positive_count(self) -> int:
        return int(self.values.sum())


def validate_band_names(band_names: Sequence[str], channels: int):
    """12 Sentinel-2 bands in canonical order, optionally followed by NDMI"""
    if len(set(band_names)) != len(band_names):
        raise BandError("*", f"duplicate band names: {list(band_names)}")
    if channels >= 0 and len(band_names) != channels:
        raise BandError("*", f"{channels} channels but {len(band_names)} band names")
    if len(band_names) not in (len(SENTINEL2_BANDS), len(SENTINEL2_BANDS) + 1):
        raise BandError("*", f"expected 12 or 13 bands, got {len(band_names)}")
    for expected, actual in zip(SENTINEL2_BANDS, band_names):
        if expected != actual:
            raise BandError(expected, f"band order mismatch: expected {expected}, got {actual}")
    if len(band_names) == len(SENTINEL2_BANDS) + 1 and band_names[-1] != NDMI_BAND:
        raise BandError(NDMI_BAND, f"13th band must be {NDMI_BAND}, got {band_names[-1]}")


# =================== NDMI ===================

def ndmi_plane(b11: np.ndarray, b12: np.ndarray, denom_floor: float = DENOM_FLOOR) -> np.ndarray:
    """(B12 - B11) / (B12 + B11); 0 where the denominator is at or below the floor"""
    denom = b12 + b11
    valid = denom > denom_floor
    out = np.zeros(np.broadcast(b11, b12).shape, dtype=np.float64)
    np.divide(b12 - b11, denom, out=out, where=valid)
    return out


def compute_ndmi(patch: MultispectralPatch, denom_floor: float = DENOM_FLOOR) -> np.ndarray:
    """Normalized difference methane index, one H x W plane"""
    b11 = patch.band("B11")
    b12 = patch.band("B12")
    return ndmi_plane(b11, b12, denom_floor)


def stack_ndmi(patch: MultispectralPatch) -> MultispectralPatch:
    """Append NDMI as the 13th channel; the 12 input planes are copied untouched"""
    if patch.channels != len(SENTINEL2_BANDS):
        if patch.has_ndmi:
            raise BandError(NDMI_BAND, "already 13 bands")
        raise BandError("*", f"stack_ndmi needs 12 bands, got {patch.channels}")
    ndmi = compute_ndmi(patch)
    bands = np.concatenate([patch.bands, ndmi[None]], axis=0)
    return replace(patch, bands=bands, band_names=list(patch.band_names) + [NDMI_BAND],
                   geo=dict(patch.geo) if patch.geo else None)


def drop_ndmi(patch: MultispectralPatch) -> MultispectralPatch:
    if not patch.has_ndmi:
        return patch
    return replace(patch, bands=patch.bands[:-1].copy(), band_names=list(patch.band_names[:-1]))


# =================== File format ===================

def _pair_paths(path: str) -> Tuple[str, str]:
    base, ext = os.path.splitext(path)
    if ext not in (".json", ".bin"):
        base = path
    return base + ".json", base + ".bin"


def _read_header(header_path: str, magic: str) -> Dict[str, Any]:
    if not os.path.exists(header_path):
        raise PatchFormatError(header_path, "header file not found")
    try:
        with open(header_path, "r", encoding="utf-8") as f:
            header = json.load(f)
    except json.JSONDecodeError as e:
        raise PatchFormatError(header_path, f"invalid header JSON: {e}")
    if not isinstance(header, dict):
        raise PatchFormatError(header_path, "header must be a JSON object")
    if header.get("magic") != magic:
        raise PatchFormatError(header_path, f"bad magic {header.get('magic')!r} (expected {magic})")
    return header


def _read_payload(header_path: str, bin_path: str, header: Dict[str, Any],
                  shape: Tuple[int, ...]) -> np.ndarray:
    dtype_name = header.get("dtype")
    if dtype_name not in _DTYPES:
        raise PatchFormatError(header_path, f"unknown dtype {dtype_name!r}")
    if header.get("order", "CHW") != "CHW":
        raise PatchFormatError(header_path, f"unsupported order {header.get('order')!r}")
    if any((not isinstance(d, int)) or d < 1 for d in shape):
        raise PatchFormatError(header_path, f"invalid extents {shape}")
    if not os.path.exists(bin_path):
        raise PatchFormatError(bin_path, "payload file not found")
    dtype = _DTYPES[dtype_name]
    with open(bin_path, "rb") as f:
        raw = f.read()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise PatchFormatError(bin_path, f"payload length mismatch (expected {expected} bytes, got {len(raw)})")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _write_pair(path: str, header: Dict[str, Any], payload: np.ndarray):
    header_path, bin_path = _pair_paths(path)
    os.makedirs(os.path.dirname(os.path.abspath(header_path)), exist_ok=True)
    with open(bin_path, "wb") as f:
        f.write(np.ascontiguousarray(payload).tobytes(order="C"))
    with open(header_path, "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2, sort_keys=True)


def save_patch(patch: MultispectralPatch, path: str) -> str:
    """Write ``<path>.json`` + ``<path>.bin``; returns the header path"""
    header = {
        "magic": PATCH_MAGIC,
        "channels": patch.channels,
        "height": patch.height,
        "width": patch.width,
        "dtype": "f64",
        "order": "CHW",
        "band_names": list(patch.band_names),
        "resolution_m": patch.resolution_m,
    }
    if patch.geo:
        header["geo"] = patch.geo
    _write_pair(path, header, patch.bands.astype("<f8"))
    logger.debug(f"[SPECTRAL] Saved patch {patch.channels}x{patch.height}x{patch.width} to {path}")
    return _pair_paths(path)[0]


def load_patch(path: str) -> MultispectralPatch:
    header_path, bin_path = _pair_paths(path)
    header = _read_header(header_path, PATCH_MAGIC)
    try:
        shape = (header["channels"], header["height"], header["width"])
        band_names = header["band_names"]
    except KeyError as e:
        raise PatchFormatError(header_path, f"missing header field {e}")
    if not isinstance(band_names, list) or len(band_names) != header["channels"]:
        raise PatchFormatError(
            header_path,
            f"header declares {header['channels']} channels but lists "
            f"{len(band_names) if isinstance(band_names, list) else 'no'} band names",
        )
    bands = _read_payload(header_path, bin_path, header, shape).astype(np.float64)
    if band_names and band_names[-1] == NDMI_BAND:
        ndmi = bands[-1]
        if not np.all(np.isfinite(ndmi)) or np.any(np.abs(ndmi) > 1.0):
            raise PatchFormatError(header_path, "NDMI values outside [-1, 1]")
    name = os.path.basename(os.path.splitext(header_path)[0])
    try:
        return MultispectralPatch(bands, band_names, float(header.get("resolution_m", 20.0)),
                                  header.get("geo"), name)
    except BandError as e:
        raise PatchFormatError(header_path, str(e))


def save_mask(mask: PlumeMask, path: str) -> str:
    h, w = mask.shape
    header = {
        "magic": MASK_MAGIC,
        "channels": 1,
        "height": h,
        "width": w,
        "dtype": "u8",
        "order": "CHW",
    }
    if mask.patch_id:
        header["patch_id"] = mask.patch_id
    _write_pair(path, header, mask.values.astype(np.uint8)[None])
    return _pair_paths(path)[0]


def load_mask(path: str) -> PlumeMask:
    header_path, bin_path = _pair_paths(path)
    header = _read_header(header_path, MASK_MAGIC)
    try:
        shape = (header["channels"], header["height"], header["width"])
    except KeyError as e:
        raise PatchFormatError(header_path, f"missing header field {e}")
    if shape[0] != 1:
        raise PatchFormatError(header_path, f"mask must have 1 channel, got {shape[0]}")
    values = _read_payload(header_path, bin_path, header, shape)[0]
    if not np.isin(values, (0, 1)).all():
        raise PatchFormatError(bin_path, "mask payload is not binary")
    return PlumeMask(values.astype(bool), header.get("patch_id"))


def save_plane(plane: np.ndarray, path: str, name: str, geo: Optional[Dict[str, Any]] = None,
               resolution_m: float = 20.0) -> str:
    """Single float plane (retrieval, heatmap) in the patch format with one named channel"""
    plane = np.asarray(plane, dtype=np.float64)
    header = {
        "magic": PATCH_MAGIC,
        "channels": 1,
        "height": plane.shape[0],
        "width": plane.shape[1],
        "dtype": "f64",
        "order": "CHW",
        "band_names": [name],
        "resolution_m": resolution_m,
    }
    if geo:
        header["geo"] = geo
    _write_pair(path, header, plane.astype("<f8")[None])
    return _pair_paths(path)[0]


def load_plane(path: str) -> np.ndarray:
    header_path, bin_path = _pair_paths(path)
    header = _read_header(header_path, PATCH_MAGIC)
    shape = (header.get("channels"), header.get("height"), header.get("width"))
    if shape[0] != 1:
        raise PatchFormatError(header_path, f"plane file must have 1 channel, got {shape[0]}")
    return _read_payload(header_path, bin_path, header, shape)[0].astype(np.float64)
