"""Binary image containers, quad-PNG intensity sets, RGB images and manifests.

PMIR layout (little-endian)::

    offset  size  field
    0       4     magic  b"PMIR"
    4       2     version (u16, = 1)
    6       4     height  (u32)
    10      4     width   (u32)
    14      1     channels (u8: 4 intensities, 3 Stokes/RGB, 1 plain matrix)
    15      1     dtype   (u8: 0 f32, 1 f64, 2 u8)
    16      4     reserved, zero
    20      ...   payload, row-major, channels interleaved

Images are numpy arrays of shape ``(height, width, channels)``, always
returned as float64.  Concurrent writers to one path are not supported.
"""
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (BadMagic, DimensionMismatch, FormatError, MissingChannel,
                     TruncatedPayload, UnsupportedVersion, ValueOutOfRange)

PMIR_MAGIC = b"PMIR"
PMIR_VERSION = 1
_HEADER = struct.Struct("<4sHIIBB4s")
HEADER_SIZE = _HEADER.size

DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
DTYPE_CODES = {"f32": 0, "f64": 1, "u8": 2}
CHANNELS = (1, 3, 4)

QUAD_SUFFIXES = ("_I0", "_I45", "_I90", "_I135")


@dataclass(frozen=True)
class PmirHeader:
    height: int
    width: int
    channels: int
    dtype: int
    version: int = PMIR_VERSION

    @property
    def payload_size(self):
        return self.height * self.width * self.channels * DTYPES[self.dtype].itemsize

    def pack(self):
        return _HEADER.pack(PMIR_MAGIC, self.version, self.height, self.width,
                            self.channels, self.dtype, b"\0\0\0\0")

    @classmethod
    def unpack(cls, raw):
        if len(raw) < 4 or raw[:4] != PMIR_MAGIC:
            raise BadMagic(f"not a PMIR file (magic {raw[:4]!r})")
        if len(raw) < HEADER_SIZE:
            raise TruncatedPayload("PMIR header is truncated")
        magic, version, h, w, ch, dt, _ = _HEADER.unpack(raw[:HEADER_SIZE])
        if version != PMIR_VERSION:
            raise UnsupportedVersion(f"PMIR version {version} is not supported")
        if dt not in DTYPES:
            raise FormatError(f"unknown PMIR dtype code {dt}")
        if ch not in CHANNELS:
            raise FormatError(f"unsupported PMIR channel count {ch}")
        if h == 0 or w == 0:
            raise FormatError("PMIR dimensions must be positive")
        return cls(h, w, ch, dt, version)


def encode_pmir(img, dtype="f64"):
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in CHANNELS or 0 in img.shape:
        raise ValueError(f"cannot store array of shape {img.shape} as PMIR")
    code = DTYPE_CODES[dtype]
    img = img.astype(np.float64, copy=False)
    if not np.all(np.isfinite(img)):
        raise ValueOutOfRange("PMIR images must be finite")
    if dtype == "u8":
        if img.min() < 0 or img.max() > 255:
            raise ValueOutOfRange(f"values in [{img.min()}, {img.max()}] do not fit u8")
        img = np.rint(img)
    h, w, ch = img.shape
    header = PmirHeader(h, w, ch, code)
    return header.pack() + np.ascontiguousarray(img, dtype=DTYPES[code]).tobytes()


def decode_pmir(raw):
    header = PmirHeader.unpack(raw)
    payload = raw[HEADER_SIZE:]
    need = header.payload_size
    if len(payload) < need:
        raise TruncatedPayload(f"PMIR payload has {len(payload)} bytes, header needs {need}")
    if len(payload) > need:
        raise FormatError(f"PMIR payload has {len(payload) - need} trailing bytes")
    data = np.frombuffer(payload, dtype=DTYPES[header.dtype])
    return data.astype(np.float64).reshape(header.height, header.width, header.channels)


def write_pmir(img, path, dtype="f64"):
    blob = encode_pmir(img, dtype)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_pmir(path):
    with open(path, "rb") as fh:
        return decode_pmir(fh.read())


def is_pmir(path):
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == PMIR_MAGIC
    except (IsADirectoryError, FileNotFoundError):
        return False


# ---------------------------------------------------------------------------
# grayscale and RGB raster files

def _read_gray(path):
    with Image.open(path) as im:
        if im.mode in ("L", "I", "I;16", "I;16B", "F"):
            return np.asarray(im, dtype=np.float64)
        if im.mode == "P" or im.mode == "LA":
            return np.asarray(im.convert("L"), dtype=np.float64)
        raise FormatError(f"{path}: expected a grayscale image, got mode {im.mode}")


def quad_paths(stem, ext=".png"):
    stem = str(stem)
    return [Path(stem + suffix + ext) for suffix in QUAD_SUFFIXES]


def read_quad_png(stem):
    """Assemble ``<stem>_I0/_I45/_I90/_I135.png`` into an ``(H, W, 4)`` image."""
    planes = []
    for path in quad_paths(stem):
        if not path.exists():
            raise MissingChannel(f"missing polarizer channel {path}")
        planes.append(_read_gray(path))
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise DimensionMismatch(f"channel images of {stem} differ in size: {sorted(shapes)}")
    return np.stack(planes, axis=-1)


def write_quad_png(img, stem):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 4:
        raise ValueError("quad PNG export needs an (H, W, 4) intensity image")
    if img.min() < 0 or img.max() > 255:
        raise ValueOutOfRange("quad PNG export needs values in [0, 255]")
    for k, path in enumerate(quad_paths(stem)):
        Image.fromarray(np.rint(img[:, :, k]).astype(np.uint8), mode="L").save(path)


def find_quad_stems(directory):
    """Quad-PNG stems in ``directory``, sorted; found from the ``_I0`` files."""
    directory = Path(directory)
    return sorted(str(p)[: -len("_I0.png")] for p in directory.glob("*_I0.png"))


def read_rgb(path):
    """RGB image as ``(H, W, 3)`` float64 in [0, 255]; PMIR with 3 channels is accepted."""
    if is_pmir(path):
        img = read_pmir(path)
        if img.shape[2] != 3:
            raise FormatError(f"{path}: expected 3 channels, got {img.shape[2]}")
        return img
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def write_rgb_png(img, path):
    img = np.asarray(img, dtype=np.float64)
    if img.min() < 0 or img.max() > 255:
        raise ValueOutOfRange("RGB PNG export needs values in [0, 255]")
    Image.fromarray(np.rint(img).astype(np.uint8), mode="RGB").save(path)


RGB_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".pmir")


def list_images(directory, extensions):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in extensions and p.is_file())


# ---------------------------------------------------------------------------
# manifests: one "<split>\t<domain>\t<path>" entry per line

SPLITS = ("train", "val", "test")
DOMAINS = ("RGB", "POLAR")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    domain: str
    split: str


def read_manifest(path, check_exists=True):
    base = Path(path).parent
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected <split>\\t<domain>\\t<path>")
            split, domain, p = parts
            if split not in SPLITS:
                raise FormatError(f"{path}:{lineno}: unknown split {split!r}")
            if domain.upper() not in DOMAINS:
                raise FormatError(f"{path}:{lineno}: unknown domain {domain!r}")
            full = p if os.path.isabs(p) else str(base / p)
            if full in seen:
                raise FormatError(f"{path}:{lineno}: duplicate entry {p}")
            seen.add(full)
            if check_exists and not (Path(full).exists() or quad_paths(full)[0].exists()):
                raise FileNotFoundError(f"{path}:{lineno}: {p} does not exist")
            entries.append(ManifestEntry(full, domain.upper(), split))
    return entries


def write_manifest(entries, path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(f"{e.split}\t{e.domain}\t{e.path}\n")


def is_manifest(path):
    """Text file whose first meaningful line looks like a manifest entry."""
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip() and not line.lstrip().startswith("#"):
                    parts = line.rstrip("\n").split("\t")
                    return len(parts) == 3 and parts[0] in SPLITS
    except (UnicodeDecodeError, IsADirectoryError, FileNotFoundError):
        return False
    return False


# ---------------------------------------------------------------------------
# PTCK: named parameter tensors
#   magic b"PTCK", u16 version, u32 count, then per entry:
#   u16 name length, utf-8 name, u8 dtype (0 f32, 1 f64), u8 ndim, u32 dims..., payload

PTCK_MAGIC = b"PTCK"
PTCK_VERSION = 1


def encode_checkpoint(params):
    out = [PTCK_MAGIC, struct.pack("<HI", PTCK_VERSION, len(params))]
    for name in sorted(params):
        arr = np.asarray(params[name])
        code = 0 if arr.dtype == np.float32 else 1
        arr = np.ascontiguousarray(arr, dtype=DTYPES[code])
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw_name)) + raw_name)
        out.append(struct.pack(f"<BB{arr.ndim}I", code, arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode_checkpoint(raw):
    if raw[:4] != PTCK_MAGIC:
        raise BadMagic(f"not a PTCK checkpoint (magic {raw[:4]!r})")
    try:
        version, count = struct.unpack_from("<HI", raw, 4)
        if version != PTCK_VERSION:
            raise UnsupportedVersion(f"PTCK version {version} is not supported")
        pos = 10
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + n].decode("utf-8")
            pos += n
            code, ndim = struct.unpack_from("<BB", raw, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            dt = DTYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + size > len(raw):
                raise TruncatedPayload(f"PTCK entry {name!r} is truncated")
            params[name] = np.frombuffer(raw[pos:pos + size], dtype=dt).reshape(shape).copy()
            pos += size
    except struct.error as exc:
        raise TruncatedPayload(f"PTCK file is truncated: {exc}") from None
    return params


def write_checkpoint(params, path):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(params))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
