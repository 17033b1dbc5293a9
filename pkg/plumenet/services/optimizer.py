"""
Optimizer Service
Adam with bias-corrected moments, global-norm gradient clipping and the
reduce-on-plateau learning rate policy
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from plumenet.config_manager import AdamConfig, SchedulerConfig
from plumenet.core.tensor import Tensor
from plumenet.errors import DataError

logger = logging.getLogger(__name__)


class Adam:
    """Adam over a fixed list of tensors; updates ``tensor.data`` in place"""

    def __init__(self, params: List[Tensor], lr: float, config: Optional[AdamConfig] = None):
        config = config or AdamConfig()
        self.params = list(params)
        self.lr = lr
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self.t = 0
        self.m: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.params}
        self.v: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        bias_correction_1 = 1.0 - self.beta1 ** self.t
        bias_correction_2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            if p.grad is None:
                continue
            key = id(p)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * p.grad
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * p.grad ** 2
            m_hat = self.m[key] / bias_correction_1
            v_hat = self.v[key] / bias_correction_2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def global_grad_norm(params: List[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad ** 2))
    return math.sqrt(total)


def clip_grad_norm(params: List[Tensor], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most max_norm; returns the pre-clip norm"""
    norm = global_grad_norm(params)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


@dataclass(frozen=True)
class PlateauState:
    lr: float
    factor: float = 0.5
    patience: int = 7
    min_delta: float = 1e-6
    best: float = math.inf
    counter: int = 0

    @classmethod
    def from_config(cls, lr: float, config: SchedulerConfig) -> "PlateauState":
        return cls(lr=lr, factor=config.factor, patience=config.patience, min_delta=config.min_delta)


def plateau_scheduler(state: PlateauState, val_loss: float) -> Tuple[PlateauState, float]:
    """
    Improvement means val_loss < best - min_delta; otherwise the counter
    grows, and once it exceeds patience the lr is multiplied by factor and
    the counter resets.
    """
    if not math.isfinite(val_loss):
        raise DataError(f"plateau scheduler needs a finite loss, got {val_loss}")
    if val_loss < state.best - state.min_delta:
        new = replace(state, best=val_loss, counter=0)
        return new, new.lr
    counter = state.counter + 1
    if counter > state.patience:
        lr = state.lr * state.factor
        logger.info(f"[TRAINER] Plateau: lr {state.lr:.3e} -> {lr:.3e}")
        new = replace(state, lr=lr, counter=0)
        return new, lr
    new = replace(state, counter=counter)
    return new, new.lr
