import math
import struct

import numpy as np
import pytest

from augablate.errors import DegenerateBatchError, LabelError, ShapeError, StateError
from augablate.nn import functional as F
from augablate.nn.checkpoint import MAGIC, load_tensors, save_tensors
from augablate.nn.init import he_normal, xavier_uniform
from augablate.nn.layers import BatchNorm, Conv2D, Dense, Dropout, ReLU
from augablate.rng import Rng

from conftest import numeric_grad, rel_error

GRAD_TOL = 1e-4


def brute_conv(x, w, b, stride):
    """Quadruple loop over output pixels with explicit same padding."""
    n, h, wd, c = x.shape
    k, _, _, out_c = w.shape
    ho, wo = math.ceil(h / stride), math.ceil(wd / stride)
    pad_h = max((ho - 1) * stride + k - h, 0) // 2
    pad_w = max((wo - 1) * stride + k - wd, 0) // 2
    out = np.zeros((n, ho, wo, out_c))
    for i in range(n):
        for r in range(ho):
            for q in range(wo):
                for o in range(out_c):
                    acc = 0.0 if b is None else b[o]
                    for dr in range(k):
                        for dq in range(k):
                            y = r * stride + dr - pad_h
                            xx = q * stride + dq - pad_w
                            if 0 <= y < h and 0 <= xx < wd:
                                acc += np.dot(x[i, y, xx, :], w[dr, dq, :, o])
                    out[i, r, q, o] = acc
    return out


# -- convolution ------------------------------------------------------------------

def test_conv_identity_1x1():
    x = np.random.default_rng(0).random((2, 4, 4, 3))
    w = np.eye(3).reshape(1, 1, 3, 3)
    out, _ = F.conv_forward(x, w, np.zeros(3), 1)
    assert np.array_equal(out, x)


def test_conv_ones_interior():
    x = np.ones((1, 5, 5, 1))
    out, _ = F.conv_forward(x, np.ones((3, 3, 1, 1)), None, 1)
    assert np.all(out[0, 1:-1, 1:-1, 0] == 9)
    assert out[0, 0, 0, 0] == 4


@pytest.mark.parametrize("k,stride,h,w", [(3, 2, 5, 5), (3, 1, 5, 4), (1, 2, 6, 5), (5, 1, 6, 6), (11, 2, 6, 6), (3, 2, 6, 6)])
def test_conv_matches_brute_force(k, stride, h, w):
    rng = np.random.default_rng(k * 10 + stride)
    x = rng.standard_normal((2, h, w, 3))
    wt = rng.standard_normal((k, k, 3, 4))
    b = rng.standard_normal(4)
    out, _ = F.conv_forward(x, wt, b, stride)
    assert out.shape == (2, math.ceil(h / stride), math.ceil(w / stride), 4)
    np.testing.assert_allclose(out, brute_conv(x, wt, b, stride), atol=1e-6)


@pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (1, 1), (1, 2), (5, 2)])
def test_conv_backward_finite_differences(k, stride):
    rng = np.random.default_rng(k + 7 * stride)
    x = rng.standard_normal((2, 5, 6, 3))
    w = rng.standard_normal((k, k, 3, 4))
    b = rng.standard_normal(4)
    out, cache = F.conv_forward(x, w, b, stride)
    g = rng.standard_normal(out.shape)
    dx, dw, db = F.conv_backward(g, cache)

    def f():
        return float((F.conv_forward(x, w, b, stride)[0] * g).sum())

    assert rel_error(dx, numeric_grad(f, x)).max() <= GRAD_TOL
    assert rel_error(dw, numeric_grad(f, w)).max() <= GRAD_TOL
    assert rel_error(db, numeric_grad(f, b)).max() <= GRAD_TOL


def test_conv_backward_zero_and_linear():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 6, 6, 2))
    w = rng.standard_normal((3, 3, 2, 3))
    out, cache = F.conv_forward(x, w, np.zeros(3), 2)
    zero = F.conv_backward(np.zeros_like(out), cache)
    assert all(np.all(t == 0) for t in zero)
    g = rng.standard_normal(out.shape)
    one = F.conv_backward(g, cache)
    two = F.conv_backward(2 * g, cache)
    for a, b in zip(one, two):
        np.testing.assert_allclose(b, 2 * a, atol=1e-6)


def test_conv_layer_errors():
    layer = Conv2D(3, 4, 3, rng=Rng(0))
    with pytest.raises(StateError):
        layer.backward(np.zeros((1, 4, 4, 4), np.float32))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 4, 4, 2), np.float32))


# -- batch norm --------------------------------------------------------------------

def bn_args(c):
    return np.ones(c), np.zeros(c), np.zeros(c), np.ones(c)


def test_batchnorm_train_normalizes():
    x = np.random.default_rng(3).standard_normal((4, 5, 5, 3)) * 3 + 2
    out, _ = F.batchnorm_forward(x, *bn_args(3), train=True)
    np.testing.assert_allclose(out.mean(axis=(0, 1, 2)), 0, atol=1e-5)
    np.testing.assert_allclose(out.var(axis=(0, 1, 2)), 1, atol=1e-3)


def test_batchnorm_constant_channel_gives_shift():
    x = np.full((3, 2, 2, 2), 0.7)
    gamma, beta = np.array([2.0, 3.0]), np.array([0.25, -1.0])
    out, _ = F.batchnorm_forward(x, gamma, beta, np.zeros(2), np.ones(2), train=True)
    assert np.allclose(out[..., 0], 0.25) and np.allclose(out[..., 1], -1.0)


def test_batchnorm_eval_hand_formula():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 3, 2))
    gamma, beta = np.array([1.5, 0.5]), np.array([0.1, -0.2])
    mu, var = np.array([0.3, -0.1]), np.array([2.0, 0.5])
    out, _ = F.batchnorm_forward(x, gamma, beta, mu.copy(), var.copy(), train=False)
    expected = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        c = idx[-1]
        expected[idx] = (x[idx] - mu[c]) / math.sqrt(var[c] + 1e-5) * gamma[c] + beta[c]
    np.testing.assert_allclose(out, expected, atol=1e-6)


def test_batchnorm_running_stats_momentum():
    x = np.random.default_rng(5).standard_normal((4, 2, 2, 1))
    rm, rv = np.zeros(1), np.ones(1)
    F.batchnorm_forward(x, np.ones(1), np.zeros(1), rm, rv, train=True)
    np.testing.assert_allclose(rm, 0.01 * x.mean())
    np.testing.assert_allclose(rv, 0.99 + 0.01 * x.var())


def test_batchnorm_degenerate_batch():
    with pytest.raises(DegenerateBatchError):
        F.batchnorm_forward(np.ones((1, 2, 2, 1)), *bn_args(1), train=True)


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_backward_finite_differences(train):
    rng = np.random.default_rng(6)
    x = rng.standard_normal((3, 4, 4, 3))
    gamma, beta = rng.standard_normal(3), rng.standard_normal(3)
    rm, rv = rng.standard_normal(3), rng.random(3) + 0.5
    out, cache = F.batchnorm_forward(x, gamma, beta, rm.copy(), rv.copy(), train)
    g = rng.standard_normal(out.shape)
    dx, dgamma, dbeta = F.batchnorm_backward(g, cache)

    def f():
        return float((F.batchnorm_forward(x, gamma, beta, rm.copy(), rv.copy(), train)[0] * g).sum())

    assert rel_error(dx, numeric_grad(f, x)).max() <= GRAD_TOL
    assert rel_error(dgamma, numeric_grad(f, gamma)).max() <= GRAD_TOL
    assert rel_error(dbeta, numeric_grad(f, beta)).max() <= GRAD_TOL
    np.testing.assert_allclose(dbeta, g.sum(axis=(0, 1, 2)), atol=1e-6)


def test_batchnorm_backward_zero():
    x = np.random.default_rng(7).standard_normal((2, 3, 3, 2))
    out, cache = F.batchnorm_forward(x, *bn_args(2), train=True)
    assert all(np.all(t == 0) for t in F.batchnorm_backward(np.zeros_like(out), cache))


# -- relu / dropout ----------------------------------------------------------------

def test_relu_sign_cases():
    neg = -np.random.default_rng(8).random((2, 3)) - 0.1
    out, mask = F.relu_forward(neg)
    assert np.all(out == 0) and np.all(F.relu_backward(np.ones_like(neg), mask) == 0)
    pos = -neg
    out, mask = F.relu_forward(pos)
    assert np.array_equal(out, pos)
    g = np.random.default_rng(9).random(pos.shape)
    assert np.array_equal(F.relu_backward(g, mask), g)


def test_relu_finite_differences():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((2, 4, 4, 3))
    x[np.abs(x) < 1e-3] = 0.5
    g = rng.standard_normal(x.shape)
    _, mask = F.relu_forward(x)
    dx = F.relu_backward(g, mask)
    num = numeric_grad(lambda: float((F.relu_forward(x)[0] * g).sum()), x)
    assert rel_error(dx, num).max() <= GRAD_TOL


def test_dropout_identity_cases():
    x = np.random.default_rng(11).random((4, 5)).astype(np.float32)
    for train in (True, False):
        out, _ = F.dropout_forward(x, 0.0, train, Rng(0))
        assert np.array_equal(out, x)
    out, _ = F.dropout_forward(x, 0.5, False, Rng(0))
    assert np.array_equal(out, x)


def test_dropout_preserves_mean():
    x = np.ones(100_000, dtype=np.float32)
    out, mask = F.dropout_forward(x, 0.5, True, Rng(1))
    assert abs(out.mean() - 1) <= 0.02
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_dropout_backward_finite_differences():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((2, 3, 3, 2))
    g = rng.standard_normal(x.shape)
    _, mask = F.dropout_forward(x, 0.3, True, Rng(5))
    dx = F.dropout_backward(g, mask)
    num = numeric_grad(lambda: float((F.dropout_forward(x, 0.3, True, Rng(5))[0] * g).sum()), x)
    assert rel_error(dx, num).max() <= GRAD_TOL


def test_dropout_layer_needs_rng_in_train():
    with pytest.raises(StateError):
        Dropout(0.5).forward(np.ones((2, 2)), train=True)


# -- pooling / dense -----------------------------------------------------------------

def test_pools_on_constant_map():
    x = np.full((2, 8, 8, 3), 0.4)
    np.testing.assert_allclose(F.global_avg_pool_forward(x)[0], 0.4)
    rng = np.random.default_rng(13)
    y = rng.random((2, 8, 8, 3))
    np.testing.assert_allclose(F.spatial_avg_pool_forward(y, 8)[0][:, 0, 0, :], F.global_avg_pool_forward(y)[0])
    with pytest.raises(ShapeError):
        F.spatial_avg_pool_forward(rng.random((1, 6, 6, 1)), 4)


def test_fc_identity():
    x = np.random.default_rng(14).random((3, 5))
    out, _ = F.fc_forward(x, np.eye(5), np.zeros(5))
    assert np.array_equal(out, x)


@pytest.mark.parametrize("which", ["gap", "spatial", "fc"])
def test_pool_and_fc_finite_differences(which):
    rng = np.random.default_rng(15)
    x = rng.standard_normal((2, 4, 4, 3))
    w, b = rng.standard_normal((48, 5)), rng.standard_normal(5)
    fwd = {
        "gap": lambda: F.global_avg_pool_forward(x),
        "spatial": lambda: F.spatial_avg_pool_forward(x, 2),
        "fc": lambda: F.fc_forward(x, w, b),
    }[which]
    bwd = {"gap": F.global_avg_pool_backward, "spatial": F.spatial_avg_pool_backward, "fc": F.fc_backward}[which]
    out, cache = fwd()
    g = rng.standard_normal(out.shape)
    grads = bwd(g, cache)
    dx = grads[0] if which == "fc" else grads

    def f():
        return float((fwd()[0] * g).sum())

    assert rel_error(dx, numeric_grad(f, x)).max() <= GRAD_TOL
    if which == "fc":
        assert rel_error(grads[1], numeric_grad(f, w)).max() <= GRAD_TOL
        assert rel_error(grads[2], numeric_grad(f, b)).max() <= GRAD_TOL


# -- softmax cross-entropy -------------------------------------------------------------

def test_softmax_ce_uniform_logits():
    loss, _ = F.softmax_cross_entropy(np.zeros((4, 10)), np.array([0, 3, 9, 2]))
    assert abs(loss - math.log(10)) <= 1e-6


def test_softmax_rows_are_simplex():
    p = F.softmax(np.random.default_rng(16).standard_normal((6, 7)) * 30)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)


def test_softmax_ce_finite_differences():
    rng = np.random.default_rng(17)
    z = rng.standard_normal((4, 5))
    y = np.array([0, 4, 2, 2])
    _, grad = F.softmax_cross_entropy(z, y)
    num = numeric_grad(lambda: F.softmax_cross_entropy(z, y)[0], z)
    assert rel_error(grad, num).max() <= GRAD_TOL


def test_softmax_ce_label_errors():
    with pytest.raises(LabelError):
        F.softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(LabelError):
        F.softmax_cross_entropy(np.zeros((2, 3)), np.array([-1, 0]))


# -- layers at float64 -------------------------------------------------------------------

def test_layer_objects_keep_dtype():
    x = np.random.default_rng(18).standard_normal((2, 4, 4, 3))
    conv = Conv2D(3, 2, 3, rng=Rng(0)).astype(np.float64)
    bn = BatchNorm(2).astype(np.float64)
    dense = Dense(32, 3, rng=Rng(0)).astype(np.float64)
    out = dense.forward(ReLU().forward(bn.forward(conv.forward(x), train=True)))
    assert out.dtype == np.float64


# -- initializers ---------------------------------------------------------------------------

def test_xavier_bounds_and_determinism():
    shape = (3, 3, 16, 32)
    w = xavier_uniform(shape, Rng(0))
    a = math.sqrt(6 / (9 * 16 + 9 * 32))
    assert np.all(np.abs(w) <= a)
    assert np.abs(w).max() > 0.9 * a
    assert np.array_equal(w, xavier_uniform(shape, Rng(0)))


def test_he_normal_std():
    shape = (3, 3, 64, 175)  # ~1e5 draws
    w = he_normal(shape, Rng(1))
    assert w.size >= 100_000
    target = math.sqrt(2 / (9 * 64))
    assert abs(w.std() / target - 1) <= 0.03
    assert np.array_equal(w, he_normal(shape, Rng(1)))


# -- checkpoint ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    tensors = {"a/kernel": np.arange(24, dtype=np.float32).reshape(2, 3, 4), "b/bias": np.array([1.5, -2], np.float32),
               "scalar": np.array(3.0, np.float32)}
    path = tmp_path / "m.augb"
    save_tensors(path, tensors)
    back = load_tensors(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape and np.array_equal(back[k], tensors[k])


def test_checkpoint_byte_layout(tmp_path):
    path = tmp_path / "m.augb"
    save_tensors(path, {"w": np.array([[1.0, 2.0]], np.float32)})
    expected = (MAGIC + struct.pack("<IQ", 1, 1) + struct.pack("<I", 1) + b"w" + struct.pack("<I", 2)
                + struct.pack("<2Q", 1, 2) + struct.pack("<2f", 1.0, 2.0))
    assert path.read_bytes() == expected
