"""
AttMetNet forward pass

Encoder: ``depth`` stages of two 3x3 conv blocks + 2x2 max-pool, widths
base_filters * 2^s. Bottleneck: two conv blocks at base_filters * 2^depth.
Decoder: 2x2 transposed conv halves the width, an attention gate filters
the matching skip (gated by the upsampled decoder feature), concat, two
conv blocks. Head: 1x1 conv + sigmoid.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from plumenet.core.ops import (
    batchnorm2d,
    channel_gate,
    concat_channels,
    conv2d,
    conv_transpose2d,
    add,
    maxpool2d,
    relu,
    sigmoid,
)
from plumenet.core.tensor import Tensor
from plumenet.errors import ConfigError, ShapeError
from plumenet.model.params import AttMetNetParams

logger = logging.getLogger(__name__)

ATTENTION_MODES = ("gated", "ones", "off")


@dataclass
class ForwardResult:
    prob: Tensor
    logits: Tensor
    activations: Dict[str, Tensor] = field(default_factory=dict)
    attention: Dict[str, Tensor] = field(default_factory=dict)


def layer_names(depth: int):
    """Conv block outputs addressable by Grad-CAM, in execution order"""
    return ([f"enc{s + 1}" for s in range(depth)] + ["bottleneck"]
            + [f"dec{s + 1}" for s in reversed(range(depth))])


def conv_block(params: AttMetNetParams, prefix: str, x: Tensor, mode: str) -> Tensor:
    cfg = params.config
    h = x
    for i in (1, 2):
        h = conv2d(h, params[f"{prefix}.conv{i}.weight"], params[f"{prefix}.conv{i}.bias"], stride=1, padding=1)
        bn_args = (params[f"{prefix}.bn{i}.gamma"], params[f"{prefix}.bn{i}.beta"],
                   params.bn_state(f"{prefix}.bn{i}"), mode, cfg.bn_eps, cfg.bn_momentum)
        if cfg.block_order == "conv-relu-bn":
            h = batchnorm2d(relu(h), *bn_args)
        else:
            h = relu(batchnorm2d(h, *bn_args))
    return h


def gate_params(params: AttMetNetParams, prefix: str) -> Dict[str, Tensor]:
    return {key: params[f"{prefix}.att.{key}"]
            for key in ("wg.weight", "wg.bias", "wx.weight", "psi.weight", "psi.bias")}


def attention_gate(g: Tensor, x: Tensor, gate: Mapping[str, Tensor]):
    """
    alpha = sigmoid(psi(relu(Wg g + Wx x + b))), shaped [N,1,H,W].

    Returns:
        (gated, alpha): alpha multiplied onto every channel of x, and alpha
    """
    if g.ndim != 4 or x.ndim != 4:
        raise ShapeError("attention_gate", "rank", 4, (g.ndim, x.ndim))
    if g.shape[0] != x.shape[0] or g.shape[2:] != x.shape[2:]:
        raise ShapeError("attention_gate", "spatial dims", x.shape[2:], g.shape[2:])
    joint = add(conv2d(g, gate["wg.weight"], gate["wg.bias"]), conv2d(x, gate["wx.weight"]))
    alpha = sigmoid(conv2d(relu(joint), gate["psi.weight"], gate["psi.bias"]))
    return channel_gate(alpha, x), alpha


def forward(params: AttMetNetParams, x, mode: str = "eval", attention: str = "gated") -> ForwardResult:
    """
    N x C x H x W input -> N x 1 x H x W probabilities.

    ``attention``: ``gated`` (learned gates), ``ones`` (alpha forced to 1
    through the gate multiply) or ``off`` (raw skips, plain U-Net).
    """
    cfg = params.config
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim != 4:
        raise ShapeError("forward", "input rank", 4, x.ndim)
    if x.shape[1] != cfg.in_channels:
        raise ShapeError("forward", "channels", cfg.in_channels, x.shape[1])
    if mode not in ("train", "eval"):
        raise ConfigError("forward.mode", f"unknown mode {mode}")
    if attention not in ATTENTION_MODES:
        raise ConfigError("forward.attention", f"unknown attention mode {attention}")
    step = 2 ** cfg.depth
    if x.shape[2] % step or x.shape[3] % step:
        raise ShapeError("forward", "spatial size", f"multiple of {step}", x.shape[2:])

    result = ForwardResult(prob=None, logits=None)
    skips = []
    h = x
    for s in range(cfg.depth):
        h = conv_block(params, f"enc{s + 1}", h, mode)
        result.activations[f"enc{s + 1}"] = h
        skips.append(h)
        h, _ = maxpool2d(h, 2)

    h = conv_block(params, "bottleneck", h, mode)
    result.activations["bottleneck"] = h

    for s in reversed(range(cfg.depth)):
        prefix = f"dec{s + 1}"
        up = conv_transpose2d(h, params[f"{prefix}.up.weight"], stride=2)
        skip = skips[s]
        if attention == "gated":
            skip, alpha = attention_gate(up, skip, gate_params(params, prefix))
            result.attention[prefix] = alpha
        elif attention == "ones":
            alpha = Tensor(np.ones((skip.shape[0], 1) + skip.shape[2:]))
            skip = channel_gate(alpha, skip)
            result.attention[prefix] = alpha
        h = conv_block(params, prefix, concat_channels(skip, up), mode)
        result.activations[prefix] = h

    result.logits = conv2d(h, params["head.weight"], params["head.bias"])
    result.prob = sigmoid(result.logits)
    return result


def predict_proba(params: AttMetNetParams, x: np.ndarray, attention: str = "gated") -> np.ndarray:
    """Eval-mode probabilities for an N x C x H x W array, no graph recorded"""
    return forward(params, Tensor(x), mode="eval", attention=attention).prob.data
