"""Linear Stokes algebra for four-polarizer cameras.

Intensity vectors are ``(i0, i45, i90, i135)`` and Stokes vectors are
``(s0, s1, s2)``.  Every function here accepts a single pixel (shape ``(4,)``
or ``(3,)``) or any stack of pixels with the channel axis last, e.g. an
image of shape ``(H, W, 4)``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveIntensity, RankDeficient, ShapeMismatch

DEFAULT_ANGLES = (0.0, 45.0, 90.0, 135.0)


# Stokes estimator printed for the standard 0/45/90/135 camera.  It is a left
# inverse of A but not the Moore-Penrose one: its s0 row is (1, 0, 1, 0)
# where the Moore-Penrose row is (1/2, 1/2, 1/2, 1/2).
_PAIR_ESTIMATOR = np.array(
    [[1.0, 0.0, 1.0, 0.0],
     [1.0, 0.0, -1.0, 0.0],
     [0.0, 1.0, 0.0, -1.0]]
)


@dataclass(frozen=True)
class CalibrationMatrix:
    """Calibration ``a`` (4x3), Stokes estimator ``a_pinv`` (3x4) and ``a_mp``.

    ``a_pinv`` is the left inverse used to recover Stokes vectors.  For the
    default angles it is the pair estimator ``s0 = i0 + i90``,
    ``s1 = i0 - i90``, ``s2 = i45 - i135``; for any other angle set it is the
    Moore-Penrose pseudoinverse ``a_mp = (A^T A)^-1 A^T``.
    """

    angles: tuple
    a: np.ndarray = field(repr=False)
    a_pinv: np.ndarray = field(repr=False)
    a_mp: np.ndarray = field(repr=False)

    @property
    def projector(self):
        """``A @ a_pinv``: idempotent, fixes exactly the calibrated intensity vectors."""
        return self.a @ self.a_pinv

    @property
    def orthogonal_projector(self):
        return self.a @ self.a_mp


def calibration_rows(angles):
    alpha = np.deg2rad(np.asarray(angles, dtype=np.float64))
    a = 0.5 * np.stack([np.ones_like(alpha), np.cos(2 * alpha), np.sin(2 * alpha)], axis=1)
    # cos/sin of multiples of 90 degrees are exact in principle; snap the
    # ~1e-17 noise so the default matrix is the exact half-integer one.
    a[np.abs(a) < 1e-15] = 0.0
    return a


def build_calibration(angles=DEFAULT_ANGLES):
    """Calibration matrix ``A`` (4x3) and its pseudoinverse for four polarizer angles."""
    angles = tuple(float(x) for x in angles)
    if len(angles) != 4:
        raise ShapeMismatch(f"expected 4 polarizer angles, got {len(angles)}")
    if not np.all(np.isfinite(angles)):
        raise ValueError("polarizer angles must be finite")
    a = calibration_rows(angles)
    gram = a.T @ a
    # rank test on the gram matrix; cond ~ 1e12 or worse is numerically singular
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-12:
        raise RankDeficient(f"calibration matrix for angles {angles} has rank < 3")
    a_mp = np.linalg.solve(gram, a.T)
    if np.allclose(np.mod(angles, 180.0), DEFAULT_ANGLES, rtol=0, atol=1e-12):
        a_pinv = _PAIR_ESTIMATOR.copy()
    else:
        a_pinv = a_mp.copy()
    for m in (a, a_pinv, a_mp):
        m.setflags(write=False)
    return CalibrationMatrix(angles=angles, a=a, a_pinv=a_pinv, a_mp=a_mp)


DEFAULT_CALIBRATION = build_calibration()


def _channels(x, n, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (n,):
        raise ShapeMismatch(f"{what} must have {n} channels on the last axis, got shape {x.shape}")
    return x


def intensities_to_stokes(p, c=DEFAULT_CALIBRATION):
    p = _channels(p, 4, "intensities")
    return p @ c.a_pinv.T


def stokes_to_intensities(s, c=DEFAULT_CALIBRATION):
    s = _channels(s, 3, "Stokes vector")
    return s @ c.a.T


def dop(s):
    """Degree of linear polarization ``sqrt(s1^2 + s2^2) / s0``.

    Raises NonPositiveIntensity if any ``s0 <= 0``.
    """
    s = _channels(s, 3, "Stokes vector")
    s0 = s[..., 0]
    if np.any(~(s0 > 0)):
        raise NonPositiveIntensity("degree of polarization needs s0 > 0")
    return np.hypot(s[..., 1], s[..., 2]) / s0


def aop(s):
    """Angle of linear polarization in degrees, in [0, 180)."""
    s = _channels(s, 3, "Stokes vector")
    return np.mod(np.rad2deg(0.5 * np.arctan2(s[..., 2], s[..., 1])), 180.0)


def stokes_from_wave(e0x, e0y):
    """Stokes vector of a totally linearly polarized wave with field amplitudes ``e0x``, ``e0y``."""
    e0x = np.asarray(e0x, dtype=np.float64)
    e0y = np.asarray(e0y, dtype=np.float64)
    if np.any(e0x < 0) or np.any(e0y < 0):
        raise ValueError("wave amplitudes must be non-negative")
    xx = e0x * e0x
    yy = e0y * e0y
    return np.stack([xx + yy, xx - yy, 2.0 * e0x * e0y], axis=-1)
