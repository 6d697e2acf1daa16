import numpy as np
import pytest

from polaradmit import kernels
from polaradmit._accel import backend
from polaradmit.stokes import DEFAULT_CALIBRATION as C


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_conv_backends_agree(rng, dtype):
    x = rng.normal(size=(2, 3, 5, 7)).astype(dtype)
    w = rng.normal(size=(4, 3, 3, 3)).astype(dtype)
    b = rng.normal(size=4).astype(dtype)
    gy = rng.normal(size=(2, 4, 5, 7)).astype(dtype)
    tol = 1e-12 if dtype == np.float64 else 1e-4
    y1, y2 = kernels._conv2d_forward_loop(x, w, b), kernels._conv2d_forward_np(x, w, b)
    assert y1.dtype == y2.dtype == dtype
    np.testing.assert_allclose(y1, y2, atol=tol)
    for g1, g2 in zip(kernels._conv2d_backward_loop(x, w, gy), kernels._conv2d_backward_np(x, w, gy)):
        np.testing.assert_allclose(g1, g2, atol=tol * 10)


def test_conv_matches_direct_sum(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    w = rng.normal(size=(3, 2, 3, 3))
    b = np.zeros(3)
    pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 4, 4))
    for o in range(3):
        for i in range(4):
            for j in range(4):
                ref[0, o, i, j] = np.sum(pad[0, :, i:i + 3, j:j + 3] * w[o])
    np.testing.assert_allclose(kernels.conv2d_forward(x, w, b), ref, atol=1e-12)


def test_pixel_stats_backends_agree(rng):
    p = rng.uniform(-50, 255, size=(500, 4))
    for u, v in zip(kernels._pixel_stats_loop(p, C.a, C.a_pinv), kernels._pixel_stats_np(p, C.a, C.a_pinv)):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-9)


def test_backend_name():
    assert backend() in ("numba", "numpy")
