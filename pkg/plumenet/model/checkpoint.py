"""
Checkpoint files: ``<name>.ckpt.json`` manifest + ``<name>.ckpt.bin`` payload

The manifest carries the model config, the ordered tensor list (name, shape,
byte offset), the normalization statistics the model was trained with and
free-form metadata. The payload is every tensor as little-endian float64,
concatenated in manifest order.
"""

import os
import json
import logging
from dataclasses import asdict
from typing import Any, Dict, Optional, Tuple

import numpy as np

from plumenet.config_manager import AttMetNetConfig
from plumenet.data.manifest import NormalizationStats
from plumenet.errors import CheckpointError, ShapeError
from plumenet.model.params import AttMetNetParams, audit, param_shapes

logger = logging.getLogger(__name__)

CKPT_MAGIC = "PLMCKPT1"
_F64 = np.dtype("<f8")


def checkpoint_paths(path: str) -> Tuple[str, str]:
    for suffix in (".ckpt.json", ".ckpt.bin"):
        if path.endswith(suffix):
            path = path[: -len(suffix)]
            break
    return path + ".ckpt.json", path + ".ckpt.bin"


def save_checkpoint(params: AttMetNetParams, path: str,
                    normalization: Optional[NormalizationStats] = None,
                    meta: Optional[Dict[str, Any]] = None) -> str:
    """Write the pair; returns the manifest path"""
    json_path, bin_path = checkpoint_paths(path)
    os.makedirs(os.path.dirname(os.path.abspath(json_path)), exist_ok=True)
    tensors = []
    offset = 0
    with open(bin_path, "wb") as f:
        for name, value in params.named_arrays():
            raw = np.ascontiguousarray(value, dtype=_F64).tobytes(order="C")
            tensors.append({"name": name, "shape": list(value.shape), "offset": offset})
            f.write(raw)
            offset += len(raw)
    manifest = {
        "magic": CKPT_MAGIC,
        "config": asdict(params.config),
        "tensors": tensors,
        "payload_bytes": offset,
        "normalization": normalization.to_dict() if normalization else None,
        "meta": meta or {},
    }
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info(f"[CHECKPOINT] Saved {len(tensors)} tensors ({offset} bytes) to {json_path}")
    return json_path


def load_checkpoint(path: str) -> Tuple[AttMetNetParams, Optional[NormalizationStats], Dict[str, Any]]:
    json_path, bin_path = checkpoint_paths(path)
    if not os.path.exists(json_path):
        raise CheckpointError(f"checkpoint manifest not found: {json_path}")
    if not os.path.exists(bin_path):
        raise CheckpointError(f"checkpoint payload not found: {bin_path}")
    try:
        with open(json_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{json_path}: invalid JSON ({e})")
    if manifest.get("magic") != CKPT_MAGIC:
        raise CheckpointError(f"{json_path}: bad magic {manifest.get('magic')!r}")

    try:
        config = AttMetNetConfig(**manifest["config"])
        config.validate()
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{json_path}: bad model config ({e})")

    with open(bin_path, "rb") as f:
        payload = f.read()
    if len(payload) != manifest.get("payload_bytes", len(payload)):
        raise CheckpointError(f"{bin_path}: payload length mismatch")

    expected = {name: (tuple(shape), kind) for name, shape, kind in param_shapes(config)}
    params = AttMetNetParams(config)
    for item in manifest.get("tensors", []):
        name, shape, offset = item["name"], tuple(item["shape"]), int(item["offset"])
        if name not in expected:
            raise CheckpointError(f"{json_path}: unexpected tensor {name}")
        if shape != expected[name][0]:
            raise CheckpointError(f"{json_path}: {name} has shape {shape}, config implies {expected[name][0]}")
        count = int(np.prod(shape))
        end = offset + count * _F64.itemsize
        if end > len(payload):
            raise CheckpointError(f"{bin_path}: payload length mismatch at {name}")
        value = np.frombuffer(payload, dtype=_F64, count=count, offset=offset).reshape(shape)
        params.set_array(name, expected[name][1], value)

    try:
        audit(params)
    except ShapeError as e:
        raise CheckpointError(f"{json_path}: {e}")

    norm = manifest.get("normalization")
    normalization = NormalizationStats.from_dict(norm) if norm else None
    logger.info(f"[CHECKPOINT] Loaded {json_path}")
    return params, normalization, manifest.get("meta", {})
