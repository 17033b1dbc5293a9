"""
AttMetNet parameter set: canonical shape list, seeded initialization and
the shape audit
"""

import logging
from collections import OrderedDict
from typing import Iterator, List, Tuple

import numpy as np

from plumenet.config_manager import AttMetNetConfig
from plumenet.core.ops import BatchNormState
from plumenet.core.tensor import Tensor
from plumenet.errors import ShapeError

logger = logging.getLogger(__name__)

# (name, shape, kind); kind is weight | bias | gamma | beta | running_mean | running_var
ParamSpec = Tuple[str, Tuple[int, ...], str]

BUFFER_KINDS = ("running_mean", "running_var")


def gate_channels(config: AttMetNetConfig, skip_channels: int) -> int:
    return max(1, int(skip_channels * config.att_inter_ratio))


def _block_specs(prefix: str, cin: int, cout: int) -> List[ParamSpec]:
    specs: List[ParamSpec] = []
    for i, c_in in ((1, cin), (2, cout)):
        specs.append((f"{prefix}.conv{i}.weight", (cout, c_in, 3, 3), "weight"))
        specs.append((f"{prefix}.conv{i}.bias", (cout,), "bias"))
        for kind in ("gamma", "beta", "running_mean", "running_var"):
            specs.append((f"{prefix}.bn{i}.{kind}", (cout,), kind))
    return specs


def param_shapes(config: AttMetNetConfig) -> List[ParamSpec]:
    """Every tensor of the network, in checkpoint order"""
    f, depth = config.base_filters, config.depth
    specs: List[ParamSpec] = []
    cin = config.in_channels
    for s in range(depth):
        specs += _block_specs(f"enc{s + 1}", cin, f * 2 ** s)
        cin = f * 2 ** s
    specs += _block_specs("bottleneck", cin, f * 2 ** depth)
    for s in reversed(range(depth)):
        width = f * 2 ** s
        prefix = f"dec{s + 1}"
        inter = gate_channels(config, width)
        specs.append((f"{prefix}.up.weight", (2 * width, width, 2, 2), "weight"))
        specs.append((f"{prefix}.att.wg.weight", (inter, width, 1, 1), "weight"))
        specs.append((f"{prefix}.att.wg.bias", (inter,), "bias"))
        specs.append((f"{prefix}.att.wx.weight", (inter, width, 1, 1), "weight"))
        specs.append((f"{prefix}.att.psi.weight", (1, inter, 1, 1), "weight"))
        specs.append((f"{prefix}.att.psi.bias", (1,), "bias"))
        specs += _block_specs(prefix, 2 * width, width)
    specs.append(("head.weight", (1, f, 1, 1), "weight"))
    specs.append(("head.bias", (1,), "bias"))
    return specs


def _fan_in(name: str, shape: Tuple[int, ...]) -> int:
    # transposed kernels are stored [Cin, Cout, kh, kw]
    if name.endswith(".up.weight"):
        return shape[0] * shape[2] * shape[3]
    return shape[1] * shape[2] * shape[3]


class AttMetNetParams:
    """Named trainable tensors plus batchnorm running statistics"""

    def __init__(self, config: AttMetNetConfig):
        self.config = config
        self.tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        self.bn: "OrderedDict[str, BatchNormState]" = OrderedDict()

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def parameters(self) -> List[Tensor]:
        return list(self.tensors.values())

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def count_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def bn_state(self, layer: str) -> BatchNormState:
        return self.bn[layer]

    def named_arrays(self) -> List[Tuple[str, np.ndarray]]:
        """Every tensor and running statistic in checkpoint order"""
        out = []
        for name, _, kind in param_shapes(self.config):
            if kind in BUFFER_KINDS:
                layer = name.rsplit(".", 1)[0]
                out.append((name, getattr(self.bn[layer], kind)))
            else:
                out.append((name, self.tensors[name].data))
        return out

    def set_array(self, name: str, kind: str, value: np.ndarray):
        if kind in BUFFER_KINDS:
            layer = name.rsplit(".", 1)[0]
            state = self.bn.setdefault(layer, BatchNormState.fresh(value.shape[0]))
            setattr(state, kind, np.array(value, dtype=np.float64))
        else:
            self.tensors[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)

    def copy(self) -> "AttMetNetParams":
        clone = AttMetNetParams(self.config)
        for name, value in self.named_arrays():
            clone.set_array(name, name.rsplit(".", 1)[1], value)
        return clone


def build_model(config: AttMetNetConfig, seed: int = 0) -> AttMetNetParams:
    """Kaiming-uniform kernels (bound sqrt(6 / fan_in)), zero biases, unit bn scale"""
    config.validate()
    rng = np.random.default_rng(seed)
    params = AttMetNetParams(config)
    for name, shape, kind in param_shapes(config):
        if kind == "weight":
            bound = np.sqrt(6.0 / _fan_in(name, shape))
            value = rng.uniform(-bound, bound, size=shape)
        elif kind in ("gamma", "running_var"):
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params.set_array(name, kind, value)
    audit(params)
    logger.info(
        f"[MODEL] Built AttMetNet in={config.in_channels} f={config.base_filters} depth={config.depth} "
        f"seed={seed}: {params.count_parameters()} parameters"
    )
    return params


def audit(params: AttMetNetParams) -> List[ParamSpec]:
    """Recompute every shape from the config and check the parameter set against it"""
    specs = param_shapes(params.config)
    expected_names = set()
    for name, shape, kind in specs:
        expected_names.add(name)
        if kind in BUFFER_KINDS:
            layer = name.rsplit(".", 1)[0]
            if layer not in params.bn:
                raise ShapeError("audit", name, shape, "missing")
            actual = getattr(params.bn[layer], kind).shape
        else:
            if name not in params.tensors:
                raise ShapeError("audit", name, shape, "missing")
            actual = params.tensors[name].shape
        if tuple(actual) != tuple(shape):
            raise ShapeError("audit", name, shape, tuple(actual))
    extra = set(params.tensors) - expected_names
    if extra:
        raise ShapeError("audit", "parameter names", "none extra", sorted(extra))
    return specs


def trainable_count(config: AttMetNetConfig) -> int:
    """Closed-form parameter count over the shape list"""
    return int(sum(np.prod(shape) for _, shape, kind in param_shapes(config) if kind not in BUFFER_KINDS))
