"""Analytic gradients against central finite differences, in float64."""

import numpy as np
import pytest

from quantscore.model import layers as L
from quantscore.model.network import backward, forward_train, init_weights, simple_cnn

EPS = 1e-6
MAX_REL = 1e-3


def rel_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


def numeric_grad(f, x, dout):
    """d(sum(f(x) * dout))/dx by central differences."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + EPS
        plus = np.sum(f(x) * dout)
        x[i] = old - EPS
        minus = np.sum(f(x) * dout)
        x[i] = old
        grad[i] = (plus - minus) / (2 * EPS)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_gradients(rng, stride, padding):
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out, cache = L.conv2d_forward(x, w, b, stride, padding)
    dout = rng.standard_normal(out.shape)
    dx, dw, db = L.conv2d_backward(dout, cache)
    assert rel_error(dx, numeric_grad(lambda v: L.conv2d_forward(v, w, b, stride, padding)[0], x, dout)) <= MAX_REL
    assert rel_error(dw, numeric_grad(lambda v: L.conv2d_forward(x, v, b, stride, padding)[0], w, dout)) <= MAX_REL
    assert rel_error(db, numeric_grad(lambda v: L.conv2d_forward(x, w, v, stride, padding)[0], b, dout)) <= MAX_REL


def test_conv2d_matches_direct_loop(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out, _ = L.conv2d_forward(x, w, b, 1, 0)
    ref = np.zeros((1, 3, 3, 3))
    for f in range(3):
        for i in range(3):
            for j in range(3):
                ref[0, f, i, j] = np.sum(x[0, :, i:i + 3, j:j + 3] * w[f]) + b[f]
    np.testing.assert_allclose(out, ref, rtol=1e-12)


def test_linear_gradients(rng):
    x = rng.standard_normal((4, 5))
    w = rng.standard_normal((3, 5))
    b = rng.standard_normal(3)
    out, cache = L.linear_forward(x, w, b)
    dout = rng.standard_normal(out.shape)
    dx, dw, db = L.linear_backward(dout, cache)
    assert rel_error(dx, numeric_grad(lambda v: L.linear_forward(v, w, b)[0], x, dout)) <= MAX_REL
    assert rel_error(dw, numeric_grad(lambda v: L.linear_forward(x, v, b)[0], w, dout)) <= MAX_REL
    assert rel_error(db, numeric_grad(lambda v: L.linear_forward(x, w, v)[0], b, dout)) <= MAX_REL


def test_relu_gradient(rng):
    # keep inputs away from the kink so finite differences are well defined
    x = rng.standard_normal((3, 7))
    x[np.abs(x) < 1e-2] = 0.5
    out, mask = L.relu_forward(x)
    dout = rng.standard_normal(out.shape)
    dx = L.relu_backward(dout, mask)
    assert rel_error(dx, numeric_grad(lambda v: L.relu_forward(v)[0], x, dout)) <= MAX_REL


@pytest.mark.parametrize("kernel,stride", [(2, 2), (3, 1)])
def test_maxpool_gradient(rng, kernel, stride):
    # distinct values so the argmax is stable under the perturbation
    x = rng.permutation(2 * 2 * 6 * 6).reshape(2, 2, 6, 6).astype(np.float64) * 0.01
    out, cache = L.maxpool2d_forward(x, kernel, stride)
    dout = rng.standard_normal(out.shape)
    dx = L.maxpool2d_backward(dout, cache)
    assert rel_error(dx, numeric_grad(lambda v: L.maxpool2d_forward(v, kernel, stride)[0], x, dout)) <= MAX_REL


def test_softmax_cross_entropy_gradient(rng):
    logits = rng.standard_normal((5, 4))
    labels = rng.integers(0, 4, size=5)
    _, grad = L.softmax_cross_entropy(logits, labels)
    num = numeric_grad(lambda v: np.array(L.softmax_cross_entropy(v, labels)[0]), logits, np.array(1.0))
    assert rel_error(grad, num) <= MAX_REL


def test_full_network_gradient(rng):
    net = simple_cnn(input_shape=(1, 8, 8), num_classes=3)
    weights = {i: {k: v.astype(np.float64) for k, v in p.items()} for i, p in init_weights(net, 1).items()}
    x = rng.random((2, 1, 8, 8))
    labels = np.array([0, 2])

    def loss(ws):
        logits, _ = forward_train(net, ws, x)
        return L.softmax_cross_entropy(logits, labels)[0]

    logits, caches = forward_train(net, weights, x)
    _, dlogits = L.softmax_cross_entropy(logits, labels)
    grads = backward(net, caches, dlogits)
    for i in net.quantizable_indices:
        w = weights[i]["bias"]
        num = numeric_grad(lambda v: np.array(loss(weights)), w, np.array(1.0))
        assert rel_error(grads[i]["bias"], num) <= MAX_REL
