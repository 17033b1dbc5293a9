"""
Core - float64 tensors, the recording tape, and the differentiable ops
"""

from plumenet.core.tensor import Tensor, Node, Graph, current_graph, tensor_op, backward, grad_check
from plumenet.core.ops import (
    BatchNormState,
    conv2d,
    conv_transpose2d,
    maxpool2d,
    batchnorm2d,
    relu,
    sigmoid,
    add,
    mul,
    scale,
    concat_channels,
    channel_gate,
    sum_all,
    mean_all,
    pointwise,
)

__all__ = [
    "Tensor", "Node", "Graph", "current_graph", "tensor_op", "backward", "grad_check",
    "BatchNormState", "conv2d", "conv_transpose2d", "maxpool2d", "batchnorm2d",
    "relu", "sigmoid", "add", "mul", "scale", "concat_channels", "channel_gate",
    "sum_all", "mean_all", "pointwise",
]
