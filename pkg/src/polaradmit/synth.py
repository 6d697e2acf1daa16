"""Synthetic polarimetric images: admissible ones and deliberately broken ones.

Pixels are drawn directly in Stokes space with a target degree of
polarization ``d`` and angle ``psi``:

    s = s0 * (1, d cos 2psi, d sin 2psi)

then mapped to intensities through the calibration matrix.  Randomness comes
from a Philox stream keyed by ``(seed, image index)`` whose counter's high
word is the row index, so any row can be produced independently of the
others and the result never depends on evaluation order.
"""
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .config import parse_float_pair, read_key_value
from .stokes import DEFAULT_CALIBRATION

CORRUPTIONS = ("none", "c1_noise", "c2_inflate", "negative_s0")


@dataclass(frozen=True)
class Corruption:
    kind: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in CORRUPTIONS:
            raise ValueError(f"unknown corruption {self.kind!r}; expected one of {CORRUPTIONS}")
        if self.kind == "c1_noise" and self.param < 0:
            raise ValueError("c1_noise sigma must be >= 0")
        if self.kind == "c2_inflate" and not self.param > 1:
            raise ValueError("c2_inflate factor must be > 1")
        if self.kind == "negative_s0" and not 0 <= self.param <= 1:
            raise ValueError("negative_s0 fraction must be in [0, 1]")

    @classmethod
    def parse(cls, text):
        """Parse ``none``, ``c1_noise(2.5)``, ``c2_inflate:2`` and the like."""
        m = re.fullmatch(r"\s*(\w+)\s*(?:[(:=]\s*([-+0-9.eE]+)\s*\)?)?\s*", text)
        if not m:
            raise ValueError(f"cannot parse corruption {text!r}")
        return cls(m.group(1), float(m.group(2)) if m.group(2) else 0.0)

    def __str__(self):
        return self.kind if self.kind == "none" else f"{self.kind}({self.param:g})"


@dataclass(frozen=True)
class SynthSpec:
    height: int = 32
    width: int = 32
    dop_range: tuple = (0.0, 0.6)
    intensity_range: tuple = (20.0, 200.0)
    aolp_range: tuple = (0.0, 180.0)  # degrees
    corruption: Corruption = field(default_factory=Corruption)
    seed: int = 0

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("image dimensions must be positive")
        lo, hi = self.dop_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError(f"dop_range must satisfy 0 <= lo <= hi <= 1, got {self.dop_range}")
        lo, hi = self.intensity_range
        if not 0 < lo <= hi:
            raise ValueError(f"intensity_range must satisfy 0 < lo <= hi, got {self.intensity_range}")
        lo, hi = self.aolp_range
        if not lo <= hi:
            raise ValueError(f"aolp_range must be ordered, got {self.aolp_range}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _row_rng(seed, index, row, stream=0):
    # counter words: [draw count (advanced by the generator), 0, stream, row]
    bitgen = np.random.Philox(key=[seed, index], counter=[0, 0, stream, row])
    return np.random.Generator(bitgen)


def _uniform(rng, lo, hi, n):
    # exact endpoints for degenerate ranges
    if lo == hi:
        return np.full(n, float(lo))
    return rng.uniform(lo, hi, n)


def _stokes_rows(spec, index):
    h, w = spec.height, spec.width
    out = np.empty((h, w, 3))
    for row in range(h):
        rng = _row_rng(spec.seed, index, row)
        s0 = _uniform(rng, *spec.intensity_range, w)
        d = _uniform(rng, *spec.dop_range, w)
        psi = np.deg2rad(_uniform(rng, *spec.aolp_range, w))
        out[row, :, 0] = s0
        out[row, :, 1] = s0 * d * np.cos(2 * psi)
        out[row, :, 2] = s0 * d * np.sin(2 * psi)
    return out


def synth_stokes(spec, index=0):
    """The clean Stokes image behind ``synth_admissible`` (shape ``(H, W, 3)``)."""
    return _stokes_rows(spec, index)


def synth_admissible(spec, index=0, c=DEFAULT_CALIBRATION):
    """Intensity image ``(H, W, 4)`` whose pixels satisfy C1, C2 and C3."""
    if spec.corruption.kind != "none":
        raise ValueError("synth_admissible needs corruption='none'; use synth_corrupted")
    return _stokes_rows(spec, index) @ c.a.T


def synth_corrupted(spec, index=0, c=DEFAULT_CALIBRATION):
    """Intensity image with the constraint named by ``spec.corruption`` broken."""
    kind, param = spec.corruption.kind, spec.corruption.param
    if kind == "none":
        raise ValueError("synth_corrupted needs a corruption; use synth_admissible")
    s = _stokes_rows(spec, index)
    h, w = spec.height, spec.width
    if kind == "c2_inflate":
        s[..., 1:] *= param
    elif kind == "negative_s0":
        n = h * w
        k = int(round(param * n))
        rng = _row_rng(spec.seed, index, 0, stream=1)
        flip = rng.permutation(n)[:k]
        s.reshape(n, 3)[flip, 0] *= -1.0
    img = s @ c.a.T
    if kind == "c1_noise" and param > 0:
        for row in range(h):
            rng = _row_rng(spec.seed, index, row, stream=2)
            img[row] += rng.normal(0.0, param, (w, 4))
    return img


def synth_image(spec, index=0, c=DEFAULT_CALIBRATION):
    if spec.corruption.kind == "none":
        return synth_admissible(spec, index, c)
    return synth_corrupted(spec, index, c)


def synth_dataset(spec, count, c=DEFAULT_CALIBRATION):
    return [synth_image(spec, k, c) for k in range(count)]


def spec_from_mapping(values, base=None):
    """Build a SynthSpec from string key=value pairs (config file or CLI)."""
    spec = base or SynthSpec()
    kw = {}
    for key, raw in values.items():
        key = key.strip().lower()
        if key in ("height", "width", "seed"):
            kw[key] = int(raw)
        elif key in ("dop_range", "intensity_range", "aolp_range"):
            kw[key] = parse_float_pair(raw)
        elif key in ("dop_lo", "dop_hi", "intensity_lo", "intensity_hi", "aolp_lo", "aolp_hi"):
            name, end = key.rsplit("_", 1)
            pair = list(kw.get(f"{name}_range", getattr(spec, f"{name}_range")))
            pair[0 if end == "lo" else 1] = float(raw)
            kw[f"{name}_range"] = tuple(pair)
        elif key == "corruption":
            kw["corruption"] = Corruption.parse(raw)
        elif key == "count":
            continue
        else:
            raise ValueError(f"unknown synth key {key!r}")
    return replace(spec, **kw)


def load_synth_spec(path):
    values = read_key_value(path)
    return spec_from_mapping(values), int(values.get("count", 1))


def synth_rgb(height, width, seed=0, index=0):
    """Smooth random RGB image in [0, 255]: a bilinear blend of four random corner colours plus mild texture."""
    rng = np.random.Generator(np.random.Philox(key=[seed, index], counter=[0, 0, 3, 0]))
    corners = rng.uniform(0, 255, (2, 2, 3))
    u = np.linspace(0.0, 1.0, height)[:, None, None]
    v = np.linspace(0.0, 1.0, width)[None, :, None]
    img = ((1 - u) * (1 - v) * corners[0, 0] + (1 - u) * v * corners[0, 1]
           + u * (1 - v) * corners[1, 0] + u * v * corners[1, 1])
    img = img + rng.normal(0.0, 8.0, (height, width, 3))
    return np.clip(img, 0.0, 255.0)
