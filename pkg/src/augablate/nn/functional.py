"""Forward and backward kernels for the layer set, NHWC layout.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes ``(dout, cache)``.  Kernels keep the dtype of their inputs, so the same
code runs at float32 for training and float64 for gradient checks.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatchError, LabelError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.99

# incremented only when a regularizer actually does work
counters = {"dropout_masks": 0, "weight_decay_updates": 0}


def reset_counters():
    for k in counters:
        counters[k] = 0


def same_padding(size, kernel, stride):
    """Output extent and (before, after) zero padding for "same" convolution."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, (total // 2, total - total // 2)


def conv_forward(x, w, b, stride):
    """Same-padded convolution.

    x: (N, H, W, C); w: (D, D, C, K); b: (K,) or None.
    Output is (N, ceil(H / stride), ceil(W / stride), K).
    """
    if x.ndim != 4:
        raise ShapeError(f"conv input must be 4-D, got shape {x.shape}")
    n, h, wd, c = x.shape
    kh, kw, wc, k = w.shape
    if wc != c:
        raise ShapeError(f"conv expects {wc} input channels, got {c}")
    ho, (pt, pb) = same_padding(h, kh, stride)
    wo, (pl, pr) = same_padding(wd, kw, stride)
    if kh == 1 and kw == 1:
        xs = x[:, ::stride, ::stride, :]
        cols = xs.reshape(-1, c)
        out = cols @ w.reshape(c, k)
    else:
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
        # (N, Ho, Wo, C, D, D) -> rows ordered (D, D, C) to match the kernel layout
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
        out = cols @ w.reshape(kh * kw * c, k)
    if b is not None:
        out += b
    cache = (x.shape, cols, w, b is not None, stride, (pt, pb, pl, pr))
    return out.reshape(n, ho, wo, k), cache


def conv_backward(dout, cache):
    xshape, cols, w, has_bias, stride, (pt, pb, pl, pr) = cache
    n, h, wd, c = xshape
    kh, kw, _, k = w.shape
    _, ho, wo, _ = dout.shape
    d2 = dout.reshape(-1, k)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0) if has_bias else None
    if stride == 1 and kh == kw and kh % 2 == 1 and kh > 1:
        # input gradient of a stride-1 same conv is a same conv with the flipped kernel
        flipped = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
        dx, _ = conv_forward(dout, flipped, None, 1)
        return dx, dw, db
    dcols = d2 @ w.reshape(-1, k).T
    if kh == 1 and kw == 1:
        dx = np.zeros(xshape, dtype=dout.dtype)
        dx[:, ::stride, ::stride, :] = dcols.reshape(n, ho, wo, c)
        return dx, dw, db
    dcols = dcols.reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros((n, h + pt + pb, wd + pl + pr, c), dtype=dout.dtype)
    hs = (ho - 1) * stride + 1
    ws = (wo - 1) * stride + 1
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + hs : stride, j : j + ws : stride, :] += dcols[:, :, :, i, j, :]
    return dxp[:, pt : pt + h, pl : pl + wd, :], dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train,
                      eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel normalization over every axis but the last.

    In train mode the running statistics are updated in place.
    """
    axes = tuple(range(x.ndim - 1))
    if train:
        if x.shape[0] < 2:
            raise DegenerateBatchError("batch normalization needs a batch of at least 2 in train mode")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean.astype(x.dtype), running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = xhat * gamma + beta
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    axes = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if not train:
        return dxhat * inv_std, dgamma, dbeta
    m = math.prod(dout.shape[:-1])
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def dropout_forward(x, rate, train, rng):
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0:
        return x, None
    counters["dropout_masks"] += 1
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def global_avg_pool_forward(x):
    return x.mean(axis=(1, 2)), x.shape


def global_avg_pool_backward(dout, xshape):
    n, h, w, c = xshape
    return np.broadcast_to(dout[:, None, None, :] / (h * w), xshape).copy()


def spatial_avg_pool_forward(x, size):
    n, h, w, c = x.shape
    if h % size or w % size:
        raise ShapeError(f"spatial extents {h}x{w} not divisible by pool size {size}")
    out = x.reshape(n, h // size, size, w // size, size, c).mean(axis=(2, 4))
    return out, (x.shape, size)


def spatial_avg_pool_backward(dout, cache):
    xshape, size = cache
    g = dout / (size * size)
    return np.repeat(np.repeat(g, size, axis=1), size, axis=2).reshape(xshape)


def fc_forward(x, w, b):
    x2 = x.reshape(x.shape[0], -1)
    if x2.shape[1] != w.shape[0]:
        raise ShapeError(f"fully connected layer expects {w.shape[0]} features, got {x2.shape[1]}")
    return x2 @ w + b, (x.shape, x2, w)


def fc_backward(dout, cache):
    xshape, x2, w = cache
    return (dout @ w.T).reshape(xshape), x2.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise LabelError(f"labels must be {n} class indices in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1
    return loss, grad / n
