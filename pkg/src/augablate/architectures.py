"""All-CNN and WRN builders.

An :class:`ArchitectureSpec` expands into a flat *plan* of :class:`LayerSpec`
entries.  The plan drives both instantiation (:func:`build`) and closed-form
parameter counting (:func:`count_params`), so counting never allocates
tensors.  ``width_scale`` multiplies every channel count except the
class count, and never changes depth.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import functional as F
from .nn.layers import (
    DECAYED,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    PreActResidual,
    ReLU,
    Sequential,
    SpatialAvgPool,
)

# (channels, kernel, stride) for every feature conv, before the class conv
ALLCNN_CIFAR = [
    (96, 3, 1), (96, 3, 1), (96, 3, 2),
    (192, 3, 1), (192, 3, 1), (192, 3, 2),
    (192, 3, 1), (192, 1, 1),
]
ALLCNN_IMAGENET = [
    (96, 11, 2), (96, 1, 1), (96, 3, 2),
    (256, 5, 1), (256, 1, 1), (256, 3, 2),
    (384, 3, 1), (384, 1, 1), (384, 3, 2),
    (1024, 3, 1), (1024, 1, 1),
]
WRN_FIRST = 16
WRN_GROUPS = (16, 32, 64)
WRN_GROUP_STRIDES = (1, 2, 2)
WRN_POOL = 8

# dropout placement of the regularized configurations
ALLCNN_INPUT_DROPOUT = 0.2
ALLCNN_STRIDED_DROPOUT = 0.5
WRN_BLOCK_DROPOUT = 0.3

NAMES = ("allcnn-cifar", "allcnn-imagenet", "wrn")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    channels: int = 0
    kernel: int = 1
    stride: int = 1
    rate: float = 0.0
    pool: int = 0
    bias: bool = False


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str = "allcnn-cifar"
    num_classes: int = 10
    width_scale: Fraction = Fraction(1)
    input_shape: tuple = (32, 32, 3)
    regularized: bool = False
    # WRN only
    blocks_per_group: int = 4
    widen: int = 10
    imagenet: bool = False
    # rates used only when regularized
    input_dropout: float = ALLCNN_INPUT_DROPOUT
    strided_dropout: float = ALLCNN_STRIDED_DROPOUT
    block_dropout: float = WRN_BLOCK_DROPOUT

    def __post_init__(self):
        if self.name not in NAMES:
            raise ConfigError(f"unknown architecture {self.name!r}; expected one of {NAMES}")
        object.__setattr__(self, "width_scale", to_fraction(self.width_scale))
        if self.width_scale <= 0:
            raise ConfigError("width_scale must be positive")
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))

    @property
    def first_stride(self):
        return 2 if self.name == "wrn" and self.imagenet else 1

    @property
    def initializer(self):
        return "he_normal" if self.name == "wrn" else "xavier_uniform"

    def dropout_rates(self):
        """Placement map: where dropout sits and at what rate (empty when unregularized)."""
        if not self.regularized:
            return {}
        if self.name == "wrn":
            return {"residual": self.block_dropout}
        return {"input": self.input_dropout, "after_stride2": self.strided_dropout}


def to_fraction(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value).strip())


def scaled(channels, width_scale):
    v = channels * width_scale
    if v.denominator != 1 or v < 1:
        raise ConfigError(f"width_scale {width_scale} gives non-integral width {channels} * {width_scale} = {v}")
    return int(v)


def plan(spec):
    """Flat list of LayerSpec for ``spec``; residual blocks are single entries."""
    if spec.name == "wrn":
        return _plan_wrn(spec)
    return _plan_allcnn(spec)


def _plan_allcnn(spec):
    table = ALLCNN_CIFAR if spec.name == "allcnn-cifar" else ALLCNN_IMAGENET
    rates = spec.dropout_rates()
    out = []
    if rates.get("input"):
        out.append(LayerSpec("dropout", "input_dropout", rate=rates["input"]))
    for i, (k, d, s) in enumerate(table, start=1):
        c = scaled(k, spec.width_scale)
        out += [
            LayerSpec("conv", f"conv{i}", channels=c, kernel=d, stride=s),
            LayerSpec("batchnorm", f"bn{i}", channels=c),
            LayerSpec("relu", f"relu{i}"),
        ]
        if s == 2 and rates.get("after_stride2"):
            out.append(LayerSpec("dropout", f"dropout{i}", rate=rates["after_stride2"]))
    # class conv feeds pooling and softmax directly, so it keeps its bias and skips BN/ReLU
    out += [
        LayerSpec("conv", "classifier", channels=spec.num_classes, kernel=1, bias=True),
        LayerSpec("global_avg_pool", "global_pool"),
    ]
    return out


def _plan_wrn(spec):
    rate = spec.dropout_rates().get("residual", 0.0)
    out = [LayerSpec("conv", "conv1", channels=scaled(WRN_FIRST, spec.width_scale),
                     kernel=3, stride=spec.first_stride)]
    for g, (base, stride) in enumerate(zip(WRN_GROUPS, WRN_GROUP_STRIDES), start=1):
        c = scaled(base * spec.widen, spec.width_scale)
        for b in range(1, spec.blocks_per_group + 1):
            out.append(LayerSpec("residual", f"group{g}.block{b}", channels=c,
                                 kernel=3, stride=stride if b == 1 else 1, rate=rate))
    c = out[-1].channels
    out += [
        LayerSpec("batchnorm", "bn_final", channels=c),
        LayerSpec("relu", "relu_final"),
        LayerSpec("spatial_avg_pool", "avg_pool", pool=WRN_POOL),
        LayerSpec("fully_connected", "fc", channels=spec.num_classes, bias=True),
    ]
    return out


def layer_step(ls, shape):
    """``(out_shape, n_params)`` of one plan entry applied to ``shape``.

    Shapes are ``(height, width, channels)`` or ``(features,)`` after global
    pooling; only trainable tensors are counted.
    """
    if ls.kind == "conv":
        h, w, c = shape
        n = ls.kernel * ls.kernel * c * ls.channels + (ls.channels if ls.bias else 0)
        return (-(-h // ls.stride), -(-w // ls.stride), ls.channels), n
    if ls.kind == "batchnorm":
        return shape, 2 * shape[-1]
    if ls.kind == "residual":
        h, w, c = shape
        k = ls.channels
        n = 2 * c + 9 * c * k + 2 * k + 9 * k * k
        if c != k or ls.stride != 1:
            n += c * k
        return (-(-h // ls.stride), -(-w // ls.stride), k), n
    if ls.kind == "global_avg_pool":
        return (shape[-1],), 0
    if ls.kind == "spatial_avg_pool":
        h, w, c = shape
        if h % ls.pool or w % ls.pool:
            raise ShapeError(f"{ls.name}: {h}x{w} maps not divisible by pool size {ls.pool}")
        return (h // ls.pool, w // ls.pool, c), 0
    if ls.kind == "fully_connected":
        return (ls.channels,), math.prod(shape) * ls.channels + ls.channels
    return shape, 0


def trace(spec):
    """Walk the plan, yielding ``(layer_spec, in_shape, out_shape, n_params)``."""
    shape = tuple(spec.input_shape)
    for ls in plan(spec):
        new, n = layer_step(ls, shape)
        yield ls, shape, new, n
        shape = new


def count_params(spec):
    return sum(n for *_, n in trace(spec))


def conv_layer_count(spec):
    """Convolutions in the network: block convs, projections and standalone convs."""
    total = 0
    for ls, shape, new, _ in trace(spec):
        if ls.kind == "conv":
            total += 1
        elif ls.kind == "residual":
            total += 2 + (1 if shape[-1] != ls.channels or ls.stride != 1 else 0)
    return total


class Network:
    """An instantiated plan: a layer stack plus named parameter access."""

    def __init__(self, spec, root):
        self.spec = spec
        self.root = root
        self._params = list(root.named_params())
        self._buffers = list(root.named_buffers())

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or tuple(x.shape[1:]) != self.spec.input_shape:
            raise ShapeError(f"expected batch of shape (N, {self.spec.input_shape}), got {x.shape}")
        return self.root.forward(x, train, rng)

    def backward(self, grad):
        """Backpropagate ``d loss / d logits``; returns ``{name: gradient}``."""
        self.root.backward(grad)
        return {name: layer.grads[p] for name, layer, p in self._params}

    def predict_proba(self, x, batch_size=256):
        outs = []
        for i in range(0, len(x), batch_size):
            outs.append(F.softmax(self.forward(x[i : i + batch_size], train=False)))
            self.root.clear_cache()
        return np.concatenate(outs)

    def parameters(self):
        """``{name: array}`` of trainable tensors (live references)."""
        return {name: layer.params[p] for name, layer, p in self._params}

    def set_parameter(self, name, value):
        for n, layer, p in self._params:
            if n == name:
                layer.params[p] = value
                return
        raise KeyError(name)

    def decayed(self):
        """Names of parameters that take weight decay: conv kernels and FC weights."""
        return {name for name, _, p in self._params if p in DECAYED}

    def num_params(self):
        return sum(v.size for v in self.parameters().values())

    def state_dict(self):
        out = {name: layer.params[p] for name, layer, p in self._params}
        out.update({name: layer.buffers[b] for name, layer, b in self._buffers})
        return out

    def load_state_dict(self, tensors):
        expected = {name: (layer.params, p) for name, layer, p in self._params}
        expected.update({name: (layer.buffers, b) for name, layer, b in self._buffers})
        missing = set(expected) - set(tensors)
        extra = set(tensors) - set(expected)
        if missing or extra:
            raise ShapeError(f"checkpoint mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        for name, (store, key) in expected.items():
            value = np.asarray(tensors[name])
            if value.shape != store[key].shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} != {store[key].shape}")
            store[key] = value.astype(store[key].dtype)

    def astype(self, dtype):
        self.root.astype(dtype)
        self._params = list(self.root.named_params())
        self._buffers = list(self.root.named_buffers())
        return self

    def clear_cache(self):
        self.root.clear_cache()


def build(spec, rng):
    """Instantiate ``spec``; ``rng`` seeds the kernel initializer."""
    layers = []
    init = spec.initializer
    for ls, shape, _, _ in trace(spec):
        if ls.kind == "conv":
            layers.append(Conv2D(shape[-1], ls.channels, ls.kernel, ls.stride, bias=ls.bias,
                                 init=init, rng=rng, name=ls.name))
        elif ls.kind == "batchnorm":
            layers.append(BatchNorm(ls.channels, name=ls.name))
        elif ls.kind == "relu":
            layers.append(ReLU(name=ls.name))
        elif ls.kind == "dropout":
            layers.append(Dropout(ls.rate, name=ls.name))
        elif ls.kind == "residual":
            layers.append(PreActResidual(shape[-1], ls.channels, ls.stride, ls.rate,
                                         init=init, rng=rng, name=ls.name))
        elif ls.kind == "global_avg_pool":
            layers.append(GlobalAvgPool(name=ls.name))
        elif ls.kind == "spatial_avg_pool":
            layers.append(SpatialAvgPool(ls.pool, name=ls.name))
        elif ls.kind == "fully_connected":
            layers.append(Dense(math.prod(shape), ls.channels, init=init, rng=rng, name=ls.name))
        else:
            raise ConfigError(f"unknown layer kind {ls.kind!r}")
    return Network(spec, Sequential(layers))


def build_allcnn(variant="cifar", num_classes=10, width_scale=1, rng=None,
                 regularized=False, input_shape=None):
    name = f"allcnn-{variant}"
    if input_shape is None:
        input_shape = (32, 32, 3) if variant == "cifar" else (128, 128, 3)
    spec = ArchitectureSpec(name, num_classes, width_scale, input_shape, regularized)
    return build(spec, rng)


def build_wrn(num_classes=10, width_scale=1, rng=None, imagenet=False,
              regularized=False, input_shape=None):
    if input_shape is None:
        input_shape = (128, 128, 3) if imagenet else (32, 32, 3)
    spec = ArchitectureSpec("wrn", num_classes, width_scale, input_shape, regularized, imagenet=imagenet)
    return build(spec, rng)
