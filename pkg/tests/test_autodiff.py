import numpy as np
import pytest

from polaradmit import autodiff as ad
from polaradmit.autodiff import Tensor
from polaradmit.errors import GraphNotRecorded, ShapeMismatch
from polaradmit.stokes import DEFAULT_CALIBRATION

from fd_oracle import numeric_grad, rel_error

TOL = 1e-6


def check_unary(op, x):
    t = Tensor(x.copy(), requires_grad=True)
    ad.backward(ad.total(op(t)))
    num = numeric_grad(lambda: float(op(Tensor(x)).value.sum()), x)
    assert rel_error(t.grad, num) < TOL


def away_from_zero(rng, shape):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 1e-3, 0.5, x)


@pytest.mark.parametrize("op", [
    ad.square, ad.absolute, ad.tanh, ad.relu, ad.leaky_relu, ad.mean, ad.spatial_mean,
    ad.channel_norm, lambda t: t[:, 1], lambda t: t * 3.0 - 1.0, lambda t: 1.0 - t,
])
def test_unary_primitives_match_finite_differences(op, rng):
    check_unary(op, away_from_zero(rng, (2, 4, 4, 4)))


def test_binary_primitives(rng):
    a = rng.normal(size=(2, 3, 4, 4))
    b = rng.normal(size=(2, 3, 4, 4))
    for op in (ad.add, ad.sub, ad.mul):
        ta = Tensor(a.copy(), requires_grad=True)
        tb = Tensor(b.copy(), requires_grad=True)
        ad.backward(ad.total(op(ta, tb)))
        assert rel_error(ta.grad, numeric_grad(lambda: float(op(Tensor(a), Tensor(b)).value.sum()), a)) < TOL
        assert rel_error(tb.grad, numeric_grad(lambda: float(op(Tensor(a), Tensor(b)).value.sum()), b)) < TOL


def test_broadcast_gradient_sums(rng):
    a = rng.normal(size=(2, 3, 4, 4))
    b = rng.normal(size=(1, 3, 1, 1))
    tb = Tensor(b.copy(), requires_grad=True)
    ad.backward(ad.total(ad.mul(Tensor(a), tb)))
    assert tb.grad.shape == b.shape
    np.testing.assert_allclose(tb.grad, a.sum(axis=(0, 2, 3), keepdims=True))


def test_conv2d_gradients(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    w = rng.normal(size=(5, 3, 3, 3))
    b = rng.normal(size=5)
    # weighted sum so every output position matters differently
    proj = rng.normal(size=(2, 5, 4, 4))

    def f():
        return float(np.sum(ad.conv2d(Tensor(x), Tensor(w), Tensor(b)).value * proj))

    tx, tw, tb = (Tensor(v.copy(), requires_grad=True) for v in (x, w, b))
    ad.backward(ad.total(ad.conv2d(tx, tw, tb) * proj))
    assert rel_error(tx.grad, numeric_grad(f, x)) < TOL
    assert rel_error(tw.grad, numeric_grad(f, w)) < TOL
    assert rel_error(tb.grad, numeric_grad(f, b)) < TOL


@pytest.mark.parametrize("matrix", [DEFAULT_CALIBRATION.a, DEFAULT_CALIBRATION.a_pinv, None])
def test_channel_linear_gradients(matrix, rng):
    if matrix is None:
        matrix = rng.normal(size=(3, 4))
    x = rng.normal(size=(2, matrix.shape[1], 4, 4))
    w = np.array(matrix, dtype=float)
    bias = rng.normal(size=matrix.shape[0])
    proj = rng.normal(size=(2, matrix.shape[0], 4, 4))

    def f():
        return float(np.sum(ad.channel_linear(Tensor(x), Tensor(w), Tensor(bias)).value * proj))

    tx, tw, tb = (Tensor(v.copy(), requires_grad=True) for v in (x, w, bias))
    ad.backward(ad.total(ad.channel_linear(tx, tw, tb) * proj))
    assert rel_error(tx.grad, numeric_grad(f, x)) < TOL
    assert rel_error(tw.grad, numeric_grad(f, w)) < TOL
    assert rel_error(tb.grad, numeric_grad(f, bias)) < TOL


def test_sum_of_weighted_input_gradient_is_input():
    x = np.array([1.0, -2.0, 3.0])
    w = Tensor(np.array([0.5, 0.1, 2.0]), requires_grad=True)
    ad.backward(ad.total(w * x))
    np.testing.assert_array_equal(w.grad, x)


def test_tanh_gradient_at_zero_is_one():
    t = Tensor(np.zeros(1), requires_grad=True)
    ad.backward(ad.total(ad.tanh(t)))
    assert t.grad[0] == 1.0


def test_tanh_stays_inside_open_interval():
    for dtype in (np.float32, np.float64):
        y = ad.tanh(Tensor(np.array([-50.0, 50.0], dtype=dtype))).value
        assert y.dtype == dtype
        assert -1 < y[0] and y[1] < 1


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x + x  # dy/dx = 2x + 1
    ad.backward(ad.total(y))
    assert x.grad[0] == 5.0


def test_backward_requires_recorded_graph():
    with pytest.raises(GraphNotRecorded):
        ad.backward(Tensor(np.array(1.0)))
    with pytest.raises(ShapeMismatch):
        ad.backward(Tensor(np.ones(3), requires_grad=True))


def test_kink_subgradients_are_zero():
    for op in (ad.relu, ad.absolute):
        t = Tensor(np.zeros(3), requires_grad=True)
        ad.backward(ad.total(op(t)))
        np.testing.assert_array_equal(t.grad, 0.0)
    t = Tensor(np.zeros((1, 4, 2, 2)), requires_grad=True)
    ad.backward(ad.total(ad.channel_norm(t)))
    np.testing.assert_array_equal(t.grad, 0.0)


def test_float32_is_preserved(rng):
    x = Tensor(rng.normal(size=(1, 2, 4, 4)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)).astype(np.float32), requires_grad=True)
    b = Tensor(np.zeros(3, np.float32), requires_grad=True)
    y = ad.mean(ad.square(ad.tanh(ad.conv2d(x, w, b)) * 2.0 - 1.0))
    assert y.dtype == np.float32
    ad.backward(y)
    assert w.grad.dtype == np.float32 and x.grad.dtype == np.float32
