"""Hot inner loops, each in a numba-compiled loop form and a numpy form.

The module-level names without prefix (``pixel_stats``, ``conv2d_forward``,
...) point at the loop form when numba is active and at the numpy form
otherwise; see ``_accel``.  Both forms stay importable so tests and the
benchmark can compare them directly.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# per-pixel constraint statistics


@njit
def _pixel_stats_loop(intens, a, a_pinv):
    n = intens.shape[0]
    residual = np.empty(n)
    normalized = np.empty(n)
    c2 = np.empty(n)
    s0 = np.empty(n)
    s = np.empty(3)
    for p in range(n):
        for r in range(3):
            acc = 0.0
            for k in range(4):
                acc += a_pinv[r, k] * intens[p, k]
            s[r] = acc
        rr = 0.0
        ii = 0.0
        aa = 0.0
        for k in range(4):
            rec = a[k, 0] * s[0] + a[k, 1] * s[1] + a[k, 2] * s[2]
            d = intens[p, k] - rec
            rr += d * d
            ii += intens[p, k] * intens[p, k]
            aa += rec * rec
        res = np.sqrt(rr)
        den = np.sqrt(ii) + np.sqrt(aa)
        residual[p] = res
        normalized[p] = res / den if den > 0.0 else 0.0
        v = s[1] * s[1] + s[2] * s[2] - s[0] * s[0]
        c2[p] = v if v > 0.0 else 0.0
        s0[p] = s[0]
    return residual, normalized, c2, s0


def _pixel_stats_np(intens, a, a_pinv):
    s = intens @ a_pinv.T
    rec = s @ a.T
    residual = np.sqrt(np.sum((intens - rec) ** 2, axis=1))
    den = np.sqrt(np.sum(intens * intens, axis=1)) + np.sqrt(np.sum(rec * rec, axis=1))
    normalized = np.divide(residual, den, out=np.zeros_like(residual), where=den > 0)
    c2 = np.maximum(s[:, 1] ** 2 + s[:, 2] ** 2 - s[:, 0] ** 2, 0.0)
    return residual, normalized, c2, s[:, 0].copy()


# ---------------------------------------------------------------------------
# 3x3, stride 1, zero "same" padding convolution (cross-correlation)
# shapes: x (B, Cin, H, W), w (Cout, Cin, 3, 3), y (B, Cout, H, W)


@njit
def _conv2d_forward_loop(x, w, bias):
    nb, cin, h, wd = x.shape
    cout = w.shape[0]
    xp = np.zeros((nb, cin, h + 2, wd + 2), dtype=x.dtype)
    xp[:, :, 1:h + 1, 1:wd + 1] = x
    y = np.empty((nb, cout, h, wd), dtype=x.dtype)
    for b in range(nb):
        for o in range(cout):
            y[b, o, :, :] = bias[o]
            for c in range(cin):
                for ki in range(3):
                    for kj in range(3):
                        wv = w[o, c, ki, kj]
                        for i in range(h):
                            for j in range(wd):
                                y[b, o, i, j] += wv * xp[b, c, i + ki, j + kj]
    return y


@njit
def _conv2d_backward_loop(x, w, gy):
    nb, cin, h, wd = x.shape
    cout = w.shape[0]
    xp = np.zeros((nb, cin, h + 2, wd + 2), dtype=x.dtype)
    xp[:, :, 1:h + 1, 1:wd + 1] = x
    gxp = np.zeros((nb, cin, h + 2, wd + 2), dtype=x.dtype)
    gw = np.zeros(w.shape, dtype=x.dtype)
    gb = np.zeros(cout, dtype=x.dtype)
    for b in range(nb):
        for o in range(cout):
            for i in range(h):
                for j in range(wd):
                    gb[o] += gy[b, o, i, j]
            for c in range(cin):
                for ki in range(3):
                    for kj in range(3):
                        wv = w[o, c, ki, kj]
                        acc = gw[o, c, ki, kj] * 0.0
                        for i in range(h):
                            for j in range(wd):
                                g = gy[b, o, i, j]
                                acc += g * xp[b, c, i + ki, j + kj]
                                gxp[b, c, i + ki, j + kj] += wv * g
                        gw[o, c, ki, kj] += acc
    gx = gxp[:, :, 1:h + 1, 1:wd + 1].copy()
    return gx, gw, gb


def _im2col(x):
    nb, cin, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(nb * h * wd, cin * 9)


def _conv2d_forward_np(x, w, bias):
    nb, cin, h, wd = x.shape
    cout = w.shape[0]
    cols = _im2col(x)
    y = cols @ w.reshape(cout, cin * 9).T + bias
    return np.ascontiguousarray(y.reshape(nb, h, wd, cout).transpose(0, 3, 1, 2))


def _conv2d_backward_np(x, w, gy):
    nb, cin, h, wd = x.shape
    cout = w.shape[0]
    g2 = gy.transpose(0, 2, 3, 1).reshape(nb * h * wd, cout)
    gw = (g2.T @ _im2col(x)).reshape(w.shape)
    gb = g2.sum(axis=0)
    # input gradient: correlate gy with the spatially flipped, channel-swapped kernel
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx = _conv2d_forward_np(gy, wf, np.zeros(cin, dtype=x.dtype))
    return gx, gw.astype(x.dtype, copy=False), gb.astype(x.dtype, copy=False)


if HAVE_NUMBA:
    pixel_stats = _pixel_stats_loop
    conv2d_forward = _conv2d_forward_loop
    conv2d_backward = _conv2d_backward_loop
else:
    pixel_stats = _pixel_stats_np
    conv2d_forward = _conv2d_forward_np
    conv2d_backward = _conv2d_backward_np
