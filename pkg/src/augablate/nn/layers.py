"""Stateful layer objects built on the kernels in :mod:`augablate.nn.functional`.

A layer owns its trainable ``params``, the matching ``grads`` written by
``backward``, and non-trainable ``buffers`` (batch-norm running statistics).
"""

import numpy as np

from ..errors import StateError
from . import functional as F
from .init import INITIALIZERS

# parameter names that receive weight decay
DECAYED = frozenset({"kernel", "weight"})


class Layer:
    kind = "layer"

    def __init__(self, name=""):
        self.name = name
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = None

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.kind} layer {self.name!r}: backward called without a cached forward pass")
        cache, self._cache = self._cache, None
        return cache

    def children(self):
        return []

    def clear_cache(self):
        self._cache = None
        for c in self.children():
            c.clear_cache()

    def named_params(self, prefix=""):
        """Yield ``(full_name, layer, param_name)`` for every trainable tensor."""
        base = f"{prefix}{self.name}"
        for pname in self.params:
            yield f"{base}/{pname}", self, pname
        for c in self.children():
            yield from c.named_params(f"{base}/" if self.name else prefix)

    def named_buffers(self, prefix=""):
        base = f"{prefix}{self.name}"
        for bname in self.buffers:
            yield f"{base}/{bname}", self, bname
        for c in self.children():
            yield from c.named_buffers(f"{base}/" if self.name else prefix)

    def astype(self, dtype):
        for d in (self.params, self.buffers):
            for k in d:
                d[k] = d[k].astype(dtype)
        for c in self.children():
            c.astype(dtype)
        return self

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, in_channels, channels, kernel, stride=1, bias=False,
                 init="xavier_uniform", rng=None, name=""):
        super().__init__(name)
        self.stride = stride
        shape = (kernel, kernel, in_channels, channels)
        self.params["kernel"] = INITIALIZERS[init](shape, rng)
        if bias:
            self.params["bias"] = np.zeros(channels, dtype=np.float32)

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.conv_forward(x, self.params["kernel"], self.params.get("bias"), self.stride)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv_backward(dout, self._take_cache())
        self.grads["kernel"] = dw
        if db is not None:
            self.grads["bias"] = db
        return dx


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, channels, eps=F.BN_EPS, momentum=F.BN_MOMENTUM, name=""):
        super().__init__(name)
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels, dtype=np.float32)
        self.params["beta"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_var"] = np.ones(channels, dtype=np.float32)

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["running_mean"], self.buffers["running_var"],
            train, self.eps, self.momentum,
        )
        return out

    def backward(self, dout):
        dx, self.grads["gamma"], self.grads["beta"] = F.batchnorm_backward(dout, self._take_cache())
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.relu_forward(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._take_cache())


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate, name=""):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if train and self.rate > 0 and rng is None:
            raise StateError("dropout in train mode needs an rng")
        out, mask = F.dropout_forward(x, self.rate, train, rng)
        self._cache = (mask,)
        return out

    def backward(self, dout):
        (mask,) = self._take_cache()
        return F.dropout_backward(dout, mask)


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.global_avg_pool_forward(x)
        return out

    def backward(self, dout):
        return F.global_avg_pool_backward(dout, self._take_cache())


class SpatialAvgPool(Layer):
    kind = "spatial_avg_pool"

    def __init__(self, size, name=""):
        super().__init__(name)
        self.size = size

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.spatial_avg_pool_forward(x, self.size)
        return out

    def backward(self, dout):
        return F.spatial_avg_pool_backward(dout, self._take_cache())


class Dense(Layer):
    kind = "fully_connected"

    def __init__(self, in_features, features, init="xavier_uniform", rng=None, name=""):
        super().__init__(name)
        self.params["weight"] = INITIALIZERS[init]((in_features, features), rng)
        self.params["bias"] = np.zeros(features, dtype=np.float32)

    def forward(self, x, train=False, rng=None):
        out, self._cache = F.fc_forward(x, self.params["weight"], self.params["bias"])
        return out

    def backward(self, dout):
        dx, self.grads["weight"], self.grads["bias"] = F.fc_backward(dout, self._take_cache())
        return dx


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers, name=""):
        super().__init__(name)
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


class PreActResidual(Layer):
    """Pre-activation residual block: BN-ReLU-conv3x3-BN-ReLU-[dropout]-conv3x3 plus shortcut.

    When the block changes shape, a strided 1x1 projection of the
    pre-activated input forms the shortcut; otherwise the raw input does.
    """

    kind = "residual"

    def __init__(self, in_channels, channels, stride=1, dropout=0.0,
                 init="he_normal", rng=None, name=""):
        super().__init__(name)
        self.bn1 = BatchNorm(in_channels, name="bn1")
        self.relu1 = ReLU(name="relu1")
        body = [
            Conv2D(in_channels, channels, 3, stride, init=init, rng=rng, name="conv1"),
            BatchNorm(channels, name="bn2"),
            ReLU(name="relu2"),
        ]
        if dropout > 0:
            body.append(Dropout(dropout, name="dropout"))
        body.append(Conv2D(channels, channels, 3, 1, init=init, rng=rng, name="conv2"))
        self.body = Sequential(body, name="body")
        self.projection = None
        if in_channels != channels or stride != 1:
            self.projection = Conv2D(in_channels, channels, 1, stride, init=init, rng=rng, name="shortcut")

    def children(self):
        return [self.bn1, self.relu1, self.body] + ([self.projection] if self.projection else [])

    def forward(self, x, train=False, rng=None):
        a = self.relu1.forward(self.bn1.forward(x, train), train)
        out = self.body.forward(a, train, rng)
        short = self.projection.forward(a, train) if self.projection else x
        if short.shape != out.shape:
            raise StateError(f"residual join of unequal shapes {short.shape} and {out.shape}")
        self._cache = True
        return out + short

    def backward(self, dout):
        self._take_cache()
        da = self.body.backward(dout)
        if self.projection is not None:
            da = da + self.projection.backward(dout)
            dx = 0
        else:
            dx = dout
        return dx + self.bn1.backward(self.relu1.backward(da))
