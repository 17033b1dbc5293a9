"""
Model - AttMetNet parameters, forward pass, Grad-CAM and checkpoints
"""

from plumenet.model.params import AttMetNetParams, audit, build_model, param_shapes, trainable_count
from plumenet.model.attmetnet import (
    ForwardResult,
    attention_gate,
    forward,
    gate_params,
    layer_names,
    predict_proba,
)
from plumenet.model.gradcam import gradcam, heatmap_argmax
from plumenet.model.checkpoint import checkpoint_paths, load_checkpoint, save_checkpoint

__all__ = [
    "AttMetNetParams", "audit", "build_model", "param_shapes", "trainable_count",
    "ForwardResult", "attention_gate", "forward", "gate_params", "layer_names", "predict_proba",
    "gradcam", "heatmap_argmax",
    "checkpoint_paths", "load_checkpoint", "save_checkpoint",
]
