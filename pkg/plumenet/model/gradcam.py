"""
Grad-CAM heatmaps for a named conv block output
"""

import logging

import numpy as np
from scipy import ndimage

from plumenet.core.ops import mul, sum_all
from plumenet.core.tensor import Graph, Tensor, backward
from plumenet.errors import ConfigError, ShapeError
from plumenet.model.attmetnet import forward, layer_names
from plumenet.model.params import AttMetNetParams

logger = logging.getLogger(__name__)


def gradcam(params: AttMetNetParams, x, layer_name: str, prob_threshold: float = 0.5,
            attention: str = "gated") -> np.ndarray:
    """
    Heatmap in [0, 1] at input resolution for a single 1 x C x H x W input.

    Target is the sum of logits over the predicted plume pixels, or the sum
    of all logits when nothing is predicted. Channel weights are the spatial
    mean of the target's gradient; the map is relu(sum_k w_k A_k), bilinearly
    upsampled and divided by its max (an all-zero map stays zero).
    """
    known = layer_names(params.config.depth)
    if layer_name not in known:
        raise ConfigError("gradcam.layer", f"unknown layer {layer_name!r}; expected one of {known}")
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if data.ndim != 4 or data.shape[0] != 1:
        raise ShapeError("gradcam", "input", "1 x C x H x W", data.shape)

    inp = Tensor(data, requires_grad=True)
    with Graph() as graph:
        result = forward(params, inp, mode="eval", attention=attention)
        activation = result.activations[layer_name].retain_grad()
        predicted = result.prob.data > prob_threshold
        if predicted.any():
            target = sum_all(mul(result.logits, Tensor(predicted.astype(np.float64))))
        else:
            logger.info("[GRADCAM] Empty predicted plume; target is the sum of all logits")
            target = sum_all(result.logits)
    backward(graph, target)
    # leave no gradients behind on the model
    params.zero_grad()

    grads = activation.grad if activation.grad is not None else np.zeros_like(activation.data)
    weights = grads.mean(axis=(2, 3))[0]
    cam = np.maximum(np.tensordot(weights, activation.data[0], axes=([0], [0])), 0.0)

    height, width = data.shape[2], data.shape[3]
    if cam.shape != (height, width):
        factors = (height / cam.shape[0], width / cam.shape[1])
        cam = ndimage.zoom(cam, factors, order=1, mode="nearest", grid_mode=True)
        cam = np.maximum(cam, 0.0)
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    return np.clip(cam, 0.0, 1.0)


def heatmap_argmax(heatmap: np.ndarray):
    """(row, col) of the heatmap peak, first occurrence in raster order"""
    return np.unravel_index(int(np.argmax(heatmap)), heatmap.shape)
