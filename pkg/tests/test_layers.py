import numpy as np
import pytest

from poolroutes import gradcheck
from poolroutes.layers import (BatchNormLayer, ConvLayer, FcLayer, ReluLayer, he_init, softmax,
                               softmax_cross_entropy)
from poolroutes.tensor import ShapeError


def naive_conv(x, w, b, pad):
    x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, _, h, wd = x.shape
    co, _, k, _ = w.shape
    out = np.zeros((n, co, h - k + 1, wd - k + 1))
    for i in range(out.shape[2]):
        for j in range(out.shape[3]):
            patch = x[:, :, i:i + k, j:j + k]
            out[:, :, i, j] = np.einsum("nckl,ockl->no", patch, w) + b
    return out


@pytest.mark.parametrize("k,pad", [(1, 0), (3, 1), (5, 0), (5, 2)])
def test_conv_matches_loop_reference(k, pad):
    rng = np.random.default_rng(k + pad)
    layer = ConvLayer(3, 4, k, pad, rng)
    layer.params["bias"][...] = rng.standard_normal(4)
    x = rng.standard_normal((2, 3, 7, 7))
    ref = naive_conv(x, layer.params["weight"], layer.params["bias"], pad)
    np.testing.assert_allclose(layer.forward(x), ref, rtol=1e-12, atol=1e-12)


def test_conv_shape_errors():
    layer = ConvLayer(3, 2, 5, 0)
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 2, 8, 8)))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 3, 4, 4)))
    with pytest.raises(RuntimeError):
        ConvLayer(1, 1, 3).backward(np.zeros((1, 1, 3, 3)))


def test_he_init_std():
    rng = np.random.default_rng(0)
    for dist in ("normal", "uniform"):
        w = he_init(50, (200_000,), rng, distribution=dist)
        assert abs(w.std() - np.sqrt(2 / 50)) < 2e-3
    with pytest.raises(ValueError):
        he_init(0, (2,), rng)


def test_fc_forward_is_affine():
    rng = np.random.default_rng(1)
    layer = FcLayer(5, 3, rng)
    x = rng.standard_normal((4, 5))
    np.testing.assert_allclose(layer.forward(x),
                               x @ layer.params["weight"].T + layer.params["bias"])


def test_batchnorm_normalises_and_tracks_running_stats():
    rng = np.random.default_rng(2)
    bn = BatchNormLayer(3)
    x = 5 + 2 * rng.standard_normal((8, 3, 4, 4))
    y = bn.forward(x, train=True)
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1, atol=1e-4)
    m = 8 * 16
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(bn.running_var,
                               0.9 + 0.1 * x.var(axis=(0, 2, 3)) * m / (m - 1))
    # eval mode uses running statistics, not the batch
    assert not np.allclose(bn.forward(x, train=False), y)


def test_relu_backward_masks():
    r = ReluLayer()
    r.forward(np.array([[-1.0, 2.0]]))
    assert r.backward(np.array([[5.0, 5.0]])).input.tolist() == [[0.0, 5.0]]


def test_softmax_cross_entropy_values():
    logits = np.array([[0.0, 0.0], [1000.0, 0.0]])
    loss, grad = softmax_cross_entropy(logits, [0, 0])
    assert loss == pytest.approx(np.log(2) / 2)
    np.testing.assert_allclose(softmax(logits).sum(axis=1), 1)
    np.testing.assert_allclose(grad, [[-0.25, 0.25], [0.0, 0.0]], atol=1e-12)
    with pytest.raises(ValueError):
        softmax_cross_entropy(logits, [0, 2])
    with pytest.raises(ShapeError):
        softmax_cross_entropy(logits, [0])


@pytest.mark.parametrize("check", [gradcheck.check_conv, gradcheck.check_fc,
                                   gradcheck.check_batchnorm, gradcheck.check_softmax_ce])
def test_layer_gradients(check):
    res = check(trials=5)
    assert res.passed, res.row()


def test_rel_error_floor():
    assert gradcheck.rel_error([1e-12], [0.0]) < 1e-6
    assert gradcheck.rel_error([1.0], [1.1]) == pytest.approx(0.1 / 1.1)
