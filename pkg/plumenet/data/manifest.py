"""
Dataset manifest - JSON-lines entry list plus a normalization sidecar

Each manifest line:
    {"id": "scene_0001", "patch_path": "patches/scene_0001.json",
     "mask_path": "masks/scene_0001.json", "ref_path": "refs/scene_0001.json",
     "label": "plume" | "no_plume", "split": "train" | "val" | "test"}

Paths are relative to the manifest's directory.
"""

import os
import json
import logging
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence

import numpy as np

from plumenet.config_manager import SENTINEL2_BANDS
from plumenet.errors import DataError
from plumenet.spectral import (
    NDMI_BAND,
    MultispectralPatch,
    PlumeMask,
    load_mask,
    load_patch,
    ndmi_plane,
)

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.jsonl"
NORM_FILE = "norm_stats.json"

LABELS = ("plume", "no_plume")

STD_FLOOR = 1e-12


@dataclass
class ManifestEntry:
    id: str
    patch_path: str
    label: str
    split: str
    mask_path: Optional[str] = None
    ref_path: Optional[str] = None

    @property
    def is_plume(self) -> bool:
        return self.label == "plume"


@dataclass
class NormalizationStats:
    """Per-band z-score statistics; NDMI carries its own pair"""
    band_names: List[str]
    mean: List[float]
    std: List[float]

    def __post_init__(self):
        if not (len(self.band_names) == len(self.mean) == len(self.std)):
            raise DataError("normalization stats: band_names, mean and std lengths differ")

    def arrays_for(self, band_names: Sequence[str]):
        try:
            idx = [self.band_names.index(b) for b in band_names]
        except ValueError as e:
            raise DataError(f"normalization stats missing band: {e}")
        mean = np.asarray(self.mean, dtype=np.float64)[idx]
        std = np.maximum(np.asarray(self.std, dtype=np.float64)[idx], STD_FLOOR)
        return mean, std

    def apply(self, bands: np.ndarray, band_names: Sequence[str]) -> np.ndarray:
        mean, std = self.arrays_for(band_names)
        return (bands - mean[:, None, None]) / std[:, None, None]

    def band_std(self, band_names: Sequence[str]) -> np.ndarray:
        return self.arrays_for(band_names)[1]

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "NormalizationStats":
        try:
            return cls(list(data["band_names"]), [float(v) for v in data["mean"]],
                       [float(v) for v in data["std"]])
        except (KeyError, TypeError) as e:
            raise DataError(f"malformed normalization stats: {e}")


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    root: str = "."
    normalization: Optional[NormalizationStats] = None

    def __post_init__(self):
        self._by_id = {}
        for entry in self.entries:
            if entry.label not in LABELS:
                raise DataError(f"entry {entry.id}: unknown label {entry.label!r}")
            if entry.id in self._by_id:
                raise DataError(f"duplicate entry id {entry.id}")
            self._by_id[entry.id] = entry

    def __len__(self):
        return len(self.entries)

    def get(self, entry_id: str) -> ManifestEntry:
        try:
            return self._by_id[entry_id]
        except KeyError:
            raise DataError(f"unknown entry id {entry_id}")

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, rel_path: str) -> str:
        return rel_path if os.path.isabs(rel_path) else os.path.join(self.root, rel_path)

    def load_patch(self, entry: ManifestEntry) -> MultispectralPatch:
        patch = load_patch(self.resolve(entry.patch_path))
        patch.name = entry.id
        return patch

    def load_mask(self, entry: ManifestEntry, shape=None) -> PlumeMask:
        """Entry mask, or an all-zero mask for a no_plume entry without one"""
        if entry.mask_path:
            mask = load_mask(self.resolve(entry.mask_path))
            mask.patch_id = entry.id
            return mask
        if entry.is_plume:
            raise DataError(f"plume entry {entry.id} has no mask")
        if shape is None:
            shape = self.load_patch(entry).bands.shape[1:]
        return PlumeMask(np.zeros(shape, dtype=bool), entry.id)

    def load_ref(self, entry: ManifestEntry) -> MultispectralPatch:
        if not entry.ref_path:
            raise DataError(f"entry {entry.id} has no reference pass")
        patch = load_patch(self.resolve(entry.ref_path))
        patch.name = f"{entry.id}_ref"
        return patch

    def validate(self, check_masks: bool = True):
        """Label/mask consistency and split disjointness"""
        seen: Dict[str, str] = {}
        for entry in self.entries:
            key = os.path.normpath(self.resolve(entry.patch_path))
            if key in seen and seen[key] != entry.split:
                raise DataError(f"patch {entry.patch_path} appears in splits {seen[key]} and {entry.split}")
            seen[key] = entry.split
            if not check_masks:
                continue
            if entry.is_plume:
                if self.load_mask(entry).positive_count() < 1:
                    raise DataError(f"plume entry {entry.id} has an empty mask")
            elif entry.mask_path and self.load_mask(entry).positive_count() > 0:
                raise DataError(f"no_plume entry {entry.id} has positive mask pixels")


# =================== File I/O ===================

def manifest_path(path: str) -> str:
    return os.path.join(path, MANIFEST_FILE) if os.path.isdir(path) else path


def load_manifest(path: str) -> DatasetManifest:
    """Load ``manifest.jsonl`` (and ``norm_stats.json`` when present) from a corpus dir or file path"""
    path = manifest_path(path)
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    root = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                entries.append(ManifestEntry(**data))
            except (json.JSONDecodeError, TypeError) as e:
                raise DataError(f"{path}:{lineno}: bad manifest entry ({e})")

    norm = None
    norm_path = os.path.join(root, NORM_FILE)
    if os.path.exists(norm_path):
        with open(norm_path, "r", encoding="utf-8") as f:
            norm = NormalizationStats.from_dict(json.load(f))

    manifest = DatasetManifest(entries, root, norm)
    logger.info(f"[DATA] Loaded manifest {path}: {len(entries)} entries")
    return manifest


def save_manifest(manifest: DatasetManifest, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, MANIFEST_FILE), "w", encoding="utf-8") as f:
        for entry in manifest.entries:
            f.write(json.dumps(asdict(entry), sort_keys=True) + "\n")
    if manifest.normalization is not None:
        with open(os.path.join(out_dir, NORM_FILE), "w", encoding="utf-8") as f:
            json.dump(manifest.normalization.to_dict(), f, indent=2)


def compute_normalization(manifest: DatasetManifest, split: str = "train") -> NormalizationStats:
    """
    Mean/std of every raw band over the split's pixels, plus NDMI computed
    from the raw B11/B12 planes. Accumulated in fixed entry order.
    """
    entries = manifest.split(split)
    if not entries:
        raise DataError(f"cannot compute normalization: split '{split}' is empty")
    n_bands = len(SENTINEL2_BANDS) + 1
    total = np.zeros(n_bands)
    total_sq = np.zeros(n_bands)
    count = 0
    for entry in entries:
        patch = manifest.load_patch(entry)
        raw = patch.bands[:len(SENTINEL2_BANDS)]
        ndmi = ndmi_plane(patch.band("B11"), patch.band("B12"))
        planes = np.concatenate([raw, ndmi[None]], axis=0)
        total += planes.sum(axis=(1, 2))
        total_sq += (planes ** 2).sum(axis=(1, 2))
        count += planes.shape[1] * planes.shape[2]
    mean = total / count
    var = np.maximum(total_sq / count - mean ** 2, 0.0)
    stats = NormalizationStats(list(SENTINEL2_BANDS) + [NDMI_BAND], mean.tolist(), np.sqrt(var).tolist())
    logger.info(f"[DATA] Normalization stats from {len(entries)} '{split}' scenes")
    return stats
