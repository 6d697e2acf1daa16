"""Constraint violations, penalty losses, dataset statistics and repair.

C1 (calibration): the intensity vector lies in the column space of ``A``.
C2 (admissibility): ``s0**2 >= s1**2 + s2**2``; equality counts as satisfied.
C3 (positivity): ``s0 > 0``.
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import EmptyDataset, EmptyImage, ShapeMismatch
from .stokes import DEFAULT_CALIBRATION

EPS_POS = 1e-6


@dataclass(frozen=True)
class ConstraintTolerance:
    """Slack for the pixel checks.

    C1 passes when ``residual <= c1_abs + c1_rel * sum(|I|)``; C2 passes when
    ``s1^2 + s2^2 - s0^2 <= c2_abs + c2_rel * s0^2``.  ``c2_rel`` only exists
    to absorb rounding on the DOP = 1 boundary.
    """

    c1_abs: float = 2.0
    c1_rel: float = 1e-6
    c2_abs: float = 0.0
    c2_rel: float = 1e-12

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not v >= 0:
                raise ValueError(f"tolerance {name} must be >= 0, got {v}")

    @classmethod
    def exact(cls):
        return cls(c1_abs=0.0, c1_rel=1e-12, c2_abs=0.0, c2_rel=1e-12)

    @classmethod
    def synthetic(cls):
        return cls(c1_abs=0.0, c1_rel=1e-6, c2_abs=0.0, c2_rel=1e-12)

    @classmethod
    def measured(cls, c1_abs=2.0):
        return cls(c1_abs=c1_abs, c1_rel=0.0, c2_abs=0.0, c2_rel=1e-12)


EXACT = ConstraintTolerance.exact()


def _pixels(p):
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1:] != (4,):
        raise ShapeMismatch(f"intensities must have 4 channels on the last axis, got {p.shape}")
    return p


def _stats(p, c):
    """Flattened per-pixel (residual, normalized residual, c2 violation, s0)."""
    flat = np.ascontiguousarray(_pixels(p).reshape(-1, 4))
    return kernels.pixel_stats(flat, np.ascontiguousarray(c.a), np.ascontiguousarray(c.a_pinv))


def c1_residual(p, c=DEFAULT_CALIBRATION):
    """``||I - A S||_2`` with ``S = a_pinv @ I``; zero exactly on calibrated pixels."""
    p = _pixels(p)
    rec = (p @ c.a_pinv.T) @ c.a.T
    return np.sqrt(np.sum((p - rec) ** 2, axis=-1))


def c1_normalized(p, c=DEFAULT_CALIBRATION):
    """``||I - A S|| / (||I|| + ||A S||)``, with 0/0 taken as 0."""
    p = _pixels(p)
    rec = (p @ c.a_pinv.T) @ c.a.T
    num = np.sqrt(np.sum((p - rec) ** 2, axis=-1))
    den = np.linalg.norm(p, axis=-1) + np.linalg.norm(rec, axis=-1)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def c2_violation(s):
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1:] != (3,):
        raise ShapeMismatch(f"Stokes vectors must have 3 channels on the last axis, got {s.shape}")
    return np.maximum(s[..., 1] ** 2 + s[..., 2] ** 2 - s[..., 0] ** 2, 0.0)


def _c1_ok(residual, p, tol):
    return residual <= tol.c1_abs + tol.c1_rel * np.sum(np.abs(p), axis=-1)


def _c2_ok(c2, s0, tol):
    return c2 <= tol.c2_abs + tol.c2_rel * s0 * s0


def check_pixel(p, c=DEFAULT_CALIBRATION, tol=EXACT):
    """Return ``(c1_ok, c2_ok, c3_ok)``; arrays when ``p`` holds several pixels."""
    p = _pixels(p)
    s = p @ c.a_pinv.T
    c1 = _c1_ok(c1_residual(p, c), p, tol)
    c2 = _c2_ok(c2_violation(s), s[..., 0], tol)
    c3 = s[..., 0] > 0
    if p.ndim == 1:
        return bool(c1), bool(c2), bool(c3)
    return c1, c2, c3


def feasible_mask(img, c=DEFAULT_CALIBRATION, tol=EXACT):
    c1, c2, c3 = check_pixel(np.reshape(img, (-1, 4)), c, tol)
    return (c1 & c2 & c3).reshape(np.shape(img)[:-1])


def image_losses(img, c=DEFAULT_CALIBRATION):
    """Pixel-averaged C1 and C2 penalties of one intensity image: ``(l_c1, l_c2)``."""
    img = _pixels(img)
    if img.size == 0:
        raise EmptyImage("image has no pixels")
    residual, _, c2, _ = _stats(img, c)
    return float(residual.mean()), float(c2.mean())


# serialized key -> attribute
_WIRE = (
    ("c1_norm_mean", "c1_normalized_mean"),
    ("c1_norm_std", "c1_normalized_std"),
    ("c1_norm_median", "c1_normalized_median"),
    ("c2_frac_mean", "c2_violation_fraction_mean"),
    ("c2_frac_std", "c2_violation_fraction_std"),
    ("c2_frac_median", "c2_violation_fraction_median"),
    ("c3_frac", "c3_violation_fraction"),
    ("pixels", "pixel_count"),
)


@dataclass(frozen=True)
class ViolationReport:
    c1_normalized_mean: float
    c1_normalized_std: float
    c1_normalized_median: float
    c2_violation_fraction_mean: float
    c2_violation_fraction_std: float
    c2_violation_fraction_median: float
    c3_violation_fraction: float
    pixel_count: int
    # pixels failing any check at the report's tolerance (drives CLI exit codes)
    infeasible_pixels: int = 0

    @property
    def feasible(self):
        return self.infeasible_pixels == 0

    def to_dict(self):
        return {wire: getattr(self, attr) for wire, attr in _WIRE}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self):
        lines = []
        for wire, attr in _WIRE:
            v = getattr(self, attr)
            lines.append(f"{wire}={v}" if isinstance(v, int) else f"{wire}={v:.6g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(**{attr: (int if wire == "pixels" else float)(d[wire]) for wire, attr in _WIRE})

    @classmethod
    def from_text(cls, text):
        d = {}
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                d[k.strip()] = v.strip()
        return cls.from_dict(d)


def image_violations(img, c=DEFAULT_CALIBRATION, tol=EXACT):
    """Per-image summary: (mean normalized C1, C2 violating fraction, C3 violating count, infeasible count, pixels)."""
    img = _pixels(img)
    flat = img.reshape(-1, 4)
    if flat.shape[0] == 0:
        raise EmptyImage("image has no pixels")
    residual, normalized, c2, s0 = _stats(flat, c)
    c1_bad = ~_c1_ok(residual, flat, tol)
    c2_bad = ~_c2_ok(c2, s0, tol)
    c3_bad = ~(s0 > 0)
    n = flat.shape[0]
    return (
        float(normalized.mean()),
        float(c2_bad.sum()) / n,
        int(c3_bad.sum()),
        int((c1_bad | c2_bad | c3_bad).sum()),
        n,
    )


def dataset_report(imgs, c=DEFAULT_CALIBRATION, tol=EXACT, threads=1):
    """Aggregate violation statistics over a dataset of intensity images.

    Per-image C1 means and C2 violating-pixel fractions are summarised by
    mean, population std and median across images; C3 is a pooled pixel
    fraction.  Results do not depend on ``threads``.
    """
    imgs = list(imgs)
    if not imgs:
        raise EmptyDataset("dataset has no images")
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(lambda im: image_violations(im, c, tol), imgs))
    else:
        rows = [image_violations(im, c, tol) for im in imgs]
    c1 = np.array([r[0] for r in rows])
    c2 = np.array([r[1] for r in rows])
    c3 = sum(r[2] for r in rows)
    bad = sum(r[3] for r in rows)
    pixels = sum(r[4] for r in rows)
    return ViolationReport(
        c1_normalized_mean=float(c1.mean()),
        c1_normalized_std=float(c1.std()),
        c1_normalized_median=float(np.median(c1)),
        c2_violation_fraction_mean=float(c2.mean()),
        c2_violation_fraction_std=float(c2.std()),
        c2_violation_fraction_median=float(np.median(c2)),
        c3_violation_fraction=c3 / pixels,
        pixel_count=int(pixels),
        infeasible_pixels=int(bad),
    )


def project_to_feasible(p, c=DEFAULT_CALIBRATION, orthogonal=False, eps_pos=EPS_POS):
    """Map intensities onto the set satisfying C1, C2 and C3.

    Stage one projects onto the calibration subspace (``A @ a_pinv``, or the
    orthogonal projector ``A @ a_mp`` with ``orthogonal=True``).  Stage two
    works on the recovered Stokes vector: pixels with ``s0 <= 0`` (or subnormal) become
    ``(eps_pos, 0, 0)``, and pixels with DOP > 1 have ``(s1, s2)`` rescaled
    to DOP = 1.  The result is mapped back through ``A``.
    """
    p = _pixels(p)
    est = c.a_mp if orthogonal else c.a_pinv
    s = p @ est.T
    s0 = s[..., 0]
    # hypot rather than squares: squares underflow for tiny pixels
    r = np.hypot(s[..., 1], s[..., 2])
    # subnormal s0 carries too few bits to survive the round trip through A
    pos = s0 >= np.finfo(np.float64).tiny
    fix = (r > s0) & pos
    scale = np.ones_like(s0)
    scale[fix] = s0[fix] / r[fix]
    s = s.copy()
    s[..., 1] *= scale
    s[..., 2] *= scale
    dark = ~pos
    s[dark] = (eps_pos, 0.0, 0.0)
    return s @ c.a.T
