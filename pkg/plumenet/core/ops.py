"""
Differentiable ops used by the network.

Shapes are NCHW. There is no implicit broadcasting: the only broadcasts are
the per-channel bias inside the convolutions / batchnorm, the scalar in
``scale`` and the explicit single-channel gate in ``channel_gate``. Every
reduction runs in a fixed serial order so a given graph always yields the
same bits.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from plumenet.core.tensor import Tensor, tensor_op
from plumenet.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

# sigmoid output is kept strictly inside (0, 1)
_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def _check_rank(op: str, t: Tensor, rank: int, what: str = "input"):
    if t.ndim != rank:
        raise ShapeError(op, f"{what} rank", rank, t.ndim)


def _check_same(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(op, "shape", a.shape, b.shape)


def _out_extent(op: str, dim: str, size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if k > size + 2 * padding:
        raise ShapeError(op, f"kernel {dim}", f"<= {size + 2 * padding}", k)
    if span % stride != 0:
        raise ShapeError(op, f"output {dim}", "an integer extent", span / stride + 1)
    return span // stride + 1


# =================== Convolutions ===================

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation, zero padding. x [N,Cin,H,W], weight [Cout,Cin,kh,kw] -> [N,Cout,H',W']"""
    op = "conv2d"
    _check_rank(op, x, 4)
    _check_rank(op, weight, 4, "kernel")
    if stride < 1:
        raise ShapeError(op, "stride", ">= 1", stride)
    if padding < 0:
        raise ShapeError(op, "padding", ">= 0", padding)
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = weight.shape
    if kcin != cin:
        raise ShapeError(op, "input channels", kcin, cin)
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(op, "bias", (cout,), bias.shape)
    ho = _out_extent(op, "height", h, kh, stride, padding)
    wo = _out_extent(op, "width", w, kw, stride, padding)

    p, s = padding, stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    wd = weight.data
    acc = np.zeros((cout, n, ho, wo))
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]
            acc += np.tensordot(wd[:, :, i, j], xs, axes=([1], [1]))
    out = np.ascontiguousarray(acc.transpose(1, 0, 2, 3))
    if bias is not None:
        out += bias.data[None, :, None, None]

    inputs = [x, weight] + ([bias] if bias is not None else [])

    def backward_fn(g):
        gx = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(wd) if weight.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                rows = slice(i, i + s * (ho - 1) + 1, s)
                cols = slice(j, j + s * (wo - 1) + 1, s)
                if gw is not None:
                    gw[:, :, i, j] = np.tensordot(g, xp[:, :, rows, cols], axes=([0, 2, 3], [0, 2, 3]))
                if gx is not None:
                    gx[:, :, rows, cols] += np.tensordot(g, wd[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
        if gx is not None and p:
            gx = np.ascontiguousarray(gx[:, :, p:p + h, p:p + w])
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return tensor_op(op, inputs, out, backward_fn, {"stride": s, "padding": p})


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride: int = 2) -> Tensor:
    """Adjoint of conv2d (padding 0). x [N,Cin,H,W], weight [Cin,Cout,kh,kw] -> [N,Cout,(H-1)s+kh,(W-1)s+kw]"""
    op = "conv_transpose2d"
    _check_rank(op, x, 4)
    _check_rank(op, weight, 4, "kernel")
    if stride < 1:
        raise ShapeError(op, "stride", ">= 1", stride)
    n, cin, h, w = x.shape
    kcin, cout, kh, kw = weight.shape
    if kcin != cin:
        raise ShapeError(op, "input channels", kcin, cin)
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(op, "bias", (cout,), bias.shape)
    s = stride
    ho = (h - 1) * s + kh
    wo = (w - 1) * s + kw

    xd, wd = x.data, weight.data
    out = np.zeros((n, cout, ho, wo))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + s * (h - 1) + 1:s, j:j + s * (w - 1) + 1:s] += \
                np.tensordot(xd, wd[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
    if bias is not None:
        out += bias.data[None, :, None, None]

    inputs = [x, weight] + ([bias] if bias is not None else [])

    def backward_fn(g):
        gx = np.zeros_like(xd) if x.requires_grad else None
        gw = np.zeros_like(wd) if weight.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                gs = g[:, :, i:i + s * (h - 1) + 1:s, j:j + s * (w - 1) + 1:s]
                if gx is not None:
                    gx += np.tensordot(gs, wd[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
                if gw is not None:
                    gw[:, :, i, j] = np.tensordot(xd, gs, axes=([0, 2, 3], [0, 2, 3]))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return tensor_op(op, inputs, out, backward_fn, {"stride": s})


# =================== Pooling / normalization ===================

def maxpool2d(x: Tensor, k: int = 2) -> Tuple[Tensor, np.ndarray]:
    """k x k max pooling; ties go to the first element of the row-major window scan"""
    op = "maxpool2d"
    _check_rank(op, x, 4)
    n, c, h, w = x.shape
    if h % k:
        raise ShapeError(op, "height", f"multiple of {k}", h)
    if w % k:
        raise ShapeError(op, "width", f"multiple of {k}", w)
    ho, wo = h // k, w // k
    windows = x.data.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        gw = np.zeros((n, c, ho, wo, k * k))
        np.put_along_axis(gw, argmax[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return [gx]

    return tensor_op(op, [x], np.ascontiguousarray(out), backward_fn, {"k": k}), argmax


@dataclass
class BatchNormState:
    """Running statistics of one batchnorm layer"""
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
                mode: str = "train", eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    """
    Per-channel normalization over (N, H, W).

    train: batch statistics (biased variance); running stats updated as
    running <- (1 - momentum) * running + momentum * batch.
    eval: running statistics only.
    """
    op = "batchnorm2d"
    _check_rank(op, x, 4)
    n, c, h, w = x.shape
    if gamma.shape != (c,):
        raise ShapeError(op, "gamma", (c,), gamma.shape)
    if beta.shape != (c,):
        raise ShapeError(op, "beta", (c,), beta.shape)
    if state.running_mean.shape != (c,) or state.running_var.shape != (c,):
        raise ShapeError(op, "running stats", (c,), state.running_mean.shape)
    if mode not in ("train", "eval"):
        raise ConfigError("batchnorm2d.mode", f"unknown mode {mode}")
    if eps <= 0:
        raise ConfigError("batchnorm2d.eps", "must be > 0")
    count = n * h * w
    if count < 1:
        raise ShapeError(op, "N*H*W", ">= 1", count)

    xd = x.data
    gd = gamma.data[None, :, None, None]
    if mode == "train":
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mean
        state.running_var = (1.0 - momentum) * state.running_var + momentum * var
    else:
        mean = state.running_mean.copy()
        var = state.running_var.copy()
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gd * xhat + beta.data[None, :, None, None]

    def backward_fn(g):
        g_beta = g.sum(axis=(0, 2, 3))
        g_gamma = (g * xhat).sum(axis=(0, 2, 3))
        dxhat = g * gd
        if mode == "train":
            gx = (inv_std[None, :, None, None] / count) * (
                count * dxhat
                - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
        else:
            gx = dxhat * inv_std[None, :, None, None]
        return [gx, g_gamma, g_beta]

    return tensor_op(op, [x, gamma, beta], out, backward_fn, {"mode": mode, "eps": eps})


# =================== Pointwise ===================

def relu(x: Tensor) -> Tensor:
    xd = x.data
    return tensor_op("relu", [x], np.maximum(xd, 0.0), lambda g: [g * (xd > 0)])


def sigmoid(x: Tensor) -> Tensor:
    """Stable logistic; exp is only ever taken of a non-positive argument"""
    xd = x.data
    z = np.exp(-np.abs(xd))
    s = np.where(xd >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    s = np.clip(s, _SIG_LO, _SIG_HI)
    return tensor_op("sigmoid", [x], s, lambda g: [g * s * (1.0 - s)])


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same("add", a, b)
    return tensor_op("add", [a, b], a.data + b.data, lambda g: [g, g])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same("mul", a, b)
    ad, bd = a.data, b.data
    return tensor_op("mul", [a, b], ad * bd, lambda g: [g * bd, g * ad])


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return tensor_op("scale", [x], x.data * factor, lambda g: [g * factor])


def concat_channels(*tensors: Tensor) -> Tensor:
    """Stack NCHW tensors along the channel axis"""
    op = "concat-channels"
    if not tensors:
        raise ShapeError(op, "operand count", ">= 1", 0)
    for t in tensors:
        _check_rank(op, t, 4)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(op, "non-channel dims", (ref[0], ref[2], ref[3]), (t.shape[0], t.shape[2], t.shape[3]))
    sizes = [t.shape[1] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=1)

    def backward_fn(g):
        return [g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors))]

    return tensor_op(op, list(tensors), out, backward_fn)


def channel_gate(alpha: Tensor, x: Tensor) -> Tensor:
    """alpha [N,1,H,W] multiplied onto every channel of x [N,C,H,W]"""
    op = "channel-gate"
    _check_rank(op, alpha, 4, "gate")
    _check_rank(op, x, 4)
    if alpha.shape[1] != 1:
        raise ShapeError(op, "gate channels", 1, alpha.shape[1])
    if (alpha.shape[0], alpha.shape[2], alpha.shape[3]) != (x.shape[0], x.shape[2], x.shape[3]):
        raise ShapeError(op, "spatial dims", x.shape[2:], alpha.shape[2:])
    ad, xd = alpha.data, x.data

    def backward_fn(g):
        return [(g * xd).sum(axis=1, keepdims=True), g * ad]

    return tensor_op(op, [alpha, x], ad * xd, backward_fn)


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return tensor_op("sum", [x], np.asarray(x.data.sum()), lambda g: [np.full(shape, float(g))])


def mean_all(x: Tensor) -> Tensor:
    shape, count = x.shape, x.size
    return tensor_op("mean", [x], np.asarray(x.data.mean()), lambda g: [np.full(shape, float(g) / count)])


POINTWISE = {
    "relu": relu,
    "sigmoid": sigmoid,
    "add": add,
    "mul": mul,
    "scale": scale,
    "concat-channels": concat_channels,
}


def pointwise(kind: str, *args, **kwargs) -> Tensor:
    """Dispatch by kind: relu | sigmoid | add | mul | scale | concat-channels"""
    try:
        fn = POINTWISE[kind]
    except KeyError:
        raise ConfigError("pointwise.kind", f"unknown kind {kind}")
    return fn(*args, **kwargs)
