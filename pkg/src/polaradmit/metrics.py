"""Fréchet distance between Gaussian feature statistics, stand-in features, error-rate evolution."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateBaseline, DimensionMismatch, EmptyImage, TooFewSamples

FEATURE_DIM = 64


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        d = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (d, d):
            raise DimensionMismatch(f"mean {self.mean.shape} and covariance {self.cov.shape} disagree")

    @property
    def dim(self):
        return self.mean.shape[0]


def fit_stats(features):
    """Sample mean and unbiased covariance of an ``(n, d)`` feature matrix."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples, got {f.shape[0]}")
    cov = np.atleast_2d(np.cov(f, rowvar=False, ddof=1))
    return GaussianStats(f.mean(axis=0), 0.5 * (cov + cov.T))


def _sym_sqrt(m):
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def trace_sqrt_product(cov_a, cov_b):
    """``Tr((cov_a cov_b)^(1/2))`` via the symmetric form ``Tr((A^½ B A^½)^½)``."""
    root_a = _sym_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))))


def frechet_distance(a, b):
    """``||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``, clamped at 0."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"feature dimensions differ: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    fd = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * trace_sqrt_product(a.cov, b.cov)
    return max(fd, 0.0)


def _feature_weights(seed, cin=4, hidden=32, out=FEATURE_DIM):
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / (cin * 9)), (hidden, cin, 3, 3))
    b1 = rng.normal(0.0, 0.1, hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / (hidden * 9)), (out, hidden, 3, 3))
    b2 = rng.normal(0.0, 0.1, out)
    return w1, b1, w2, b2


def toy_features(img, seed=0):
    """64-d descriptor of an ``(H, W, C)`` image from a fixed random two-layer conv net.

    A seed-determined stand-in for a pretrained detector backbone:
    conv3x3 -> ReLU -> conv3x3 -> ReLU -> global average pooling, on
    intensities scaled to [0, 1].
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise EmptyImage(f"expected a non-empty (H, W, C) image, got {img.shape}")
    w1, b1, w2, b2 = _feature_weights(seed, cin=img.shape[2])
    x = np.ascontiguousarray((img / 255.0).transpose(2, 0, 1)[None])
    h = np.maximum(kernels.conv2d_forward(x, w1, b1), 0.0)
    h = np.maximum(kernels.conv2d_forward(h, w2, b2), 0.0)
    return h[0].mean(axis=(1, 2))


def dataset_features(imgs, seed=0):
    return np.stack([toy_features(im, seed) for im in imgs])


@dataclass(frozen=True)
class ApPair:
    ap_rgb: float
    ap_polar: float

    def __post_init__(self):
        for v in (self.ap_rgb, self.ap_polar):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"average precision must be in [0, 1], got {v}")


def error_rate(ap_rgb, ap_polar=None):
    """Relative change of the detection error ``1 - AP`` from RGB to polarimetric input.

    Accepts an ``ApPair`` or two floats.  Negative values mean the
    polarimetric model makes fewer errors.
    """
    pair = ap_rgb if isinstance(ap_rgb, ApPair) else ApPair(ap_rgb, ap_polar)
    base = 1.0 - pair.ap_rgb
    if base == 0.0:
        raise DegenerateBaseline("RGB baseline has AP = 1; error rate evolution is undefined")
    return ((1.0 - pair.ap_polar) - base) / base
