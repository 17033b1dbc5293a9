"""
Data - corpus manifests, crop/augment transforms, epoch sampling and the
synthetic scene generator
"""

from plumenet.data.manifest import (
    DatasetManifest,
    ManifestEntry,
    NormalizationStats,
    compute_normalization,
    load_manifest,
    save_manifest,
)
from plumenet.data.transforms import augment, center_offset, crop, network_input, rotate
from plumenet.data.sampler import epoch_rng, epoch_sampler
from plumenet.data.synth import SynthScene, plume_field, synth_corpus, synth_scene

__all__ = [
    "DatasetManifest", "ManifestEntry", "NormalizationStats", "compute_normalization",
    "load_manifest", "save_manifest",
    "augment", "center_offset", "crop", "network_input", "rotate",
    "epoch_rng", "epoch_sampler",
    "SynthScene", "plume_field", "synth_corpus", "synth_scene",
]
