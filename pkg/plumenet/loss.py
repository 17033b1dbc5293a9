"""
Pixel losses on sigmoid probabilities: focal, BCE and weighted BCE.

Each loss is one fused graph op with an analytic gradient wrt the
probabilities. Probabilities are clamped to [EPS, 1 - EPS] before the log;
the gradient is zero where the clamp is active. Reduction is the mean over
every pixel of the batch.
"""

import logging
from typing import Callable

import numpy as np

from plumenet.config_manager import LossConfig
from plumenet.core.tensor import Tensor, tensor_op
from plumenet.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

EPS = 1e-7


def _as_target(op: str, pred: Tensor, target) -> np.ndarray:
    values = getattr(target, "values", target)
    if isinstance(values, Tensor):
        values = values.data
    y = np.asarray(values, dtype=np.float64)
    if y.shape != pred.shape:
        raise ShapeError(op, "target shape", pred.shape, y.shape)
    return y


def _clamped(pred: Tensor):
    p = np.clip(pred.data, EPS, 1.0 - EPS)
    inside = (pred.data >= EPS) & (pred.data <= 1.0 - EPS)
    return p, inside


def focal_loss(pred: Tensor, target, alpha: float = 0.75, gamma: float = 2.0) -> Tensor:
    """mean of -alpha_t (1 - p_t)^gamma log(p_t)"""
    op = "focal_loss"
    if not isinstance(pred, Tensor):
        pred = Tensor(pred)
    y = _as_target(op, pred, target)
    p, inside = _clamped(pred)
    pos = y > 0.5
    pt = np.where(pos, p, 1.0 - p)
    at = np.where(pos, alpha, 1.0 - alpha)
    log_pt = np.log(pt)
    mod = (1.0 - pt) ** gamma
    per_pixel = -at * mod * log_pt
    count = per_pixel.size

    def backward_fn(g):
        if gamma == 0:
            dmod = np.zeros_like(pt)
        else:
            dmod = gamma * (1.0 - pt) ** (gamma - 1.0)
        # d/dp_t of -a (1-p_t)^g log p_t
        dpt = -at * (-dmod * log_pt + mod / pt)
        dp = np.where(pos, dpt, -dpt) * inside
        return [dp * (float(g) / count)]

    return tensor_op(op, [pred], np.asarray(per_pixel.mean()), backward_fn,
                     {"alpha": alpha, "gamma": gamma})


def weighted_bce_loss(pred: Tensor, target, pos_weight: float = 3.0) -> Tensor:
    """mean of -[w y log p + (1 - y) log(1 - p)]"""
    op = "weighted_bce_loss"
    if pos_weight <= 0:
        raise ConfigError("train.loss.pos_weight", f"must be > 0, got {pos_weight}")
    if not isinstance(pred, Tensor):
        pred = Tensor(pred)
    y = _as_target(op, pred, target)
    p, inside = _clamped(pred)
    per_pixel = -(pos_weight * y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    count = per_pixel.size

    def backward_fn(g):
        dp = (-pos_weight * y / p + (1.0 - y) / (1.0 - p)) * inside
        return [dp * (float(g) / count)]

    return tensor_op(op, [pred], np.asarray(per_pixel.mean()), backward_fn, {"pos_weight": pos_weight})


def bce_loss(pred: Tensor, target) -> Tensor:
    return weighted_bce_loss(pred, target, pos_weight=1.0)


def loss_fn(config: LossConfig) -> Callable[[Tensor, object], Tensor]:
    """Bind a LossConfig to a (pred, target) -> scalar loss callable"""
    if config.kind == "focal":
        return lambda pred, target: focal_loss(pred, target, config.alpha, config.gamma)
    if config.kind == "bce":
        return bce_loss
    if config.kind == "weighted_bce":
        return lambda pred, target: weighted_bce_loss(pred, target, config.pos_weight)
    raise ConfigError("train.loss.kind", f"unknown loss {config.kind}")
