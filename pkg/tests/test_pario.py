import struct

import numpy as np
import pytest
from PIL import Image

from polaradmit.errors import (BadMagic, DimensionMismatch, FormatError, MissingChannel,
                               TruncatedPayload, UnsupportedVersion, ValueOutOfRange)
from polaradmit.pario import (HEADER_SIZE, ManifestEntry, PmirHeader, decode_checkpoint,
                              decode_pmir, encode_checkpoint, encode_pmir, find_quad_stems,
                              read_checkpoint, read_manifest, read_pmir, read_quad_png, read_rgb,
                              write_checkpoint, write_manifest, write_pmir, write_quad_png)


def test_header_layout():
    raw = PmirHeader(2, 3, 4, 1).pack()
    assert len(raw) == HEADER_SIZE == 20
    assert raw == b"PMIR" + struct.pack("<HII", 1, 2, 3) + bytes([4, 1]) + b"\0" * 4


def test_f64_round_trip_is_bit_exact(tmp_path, rng):
    img = rng.normal(size=(5, 7, 4)) * 1e3
    write_pmir(img, tmp_path / "a.pmir")
    back = read_pmir(tmp_path / "a.pmir")
    assert back.tobytes() == img.tobytes()
    raw = (tmp_path / "a.pmir").read_bytes()
    assert len(raw) == 20 + 5 * 7 * 4 * 8
    # channel-interleaved row-major payload
    assert struct.unpack_from("<d", raw, 20 + 8)[0] == img[0, 0, 1]


def test_u8_round_trip(rng):
    img = rng.integers(0, 256, size=(3, 4, 3)).astype(float)
    assert np.array_equal(decode_pmir(encode_pmir(img, "u8")), img)
    for bad in (256.0, -1.0, 0.5 - 1):
        with pytest.raises(ValueOutOfRange):
            encode_pmir(np.full((1, 1, 4), bad), "u8")


def test_f32_round_trip(rng):
    img = rng.normal(size=(2, 2, 4)).astype(np.float32).astype(np.float64)
    assert np.array_equal(decode_pmir(encode_pmir(img, "f32")), img)


def test_bad_magic():
    with pytest.raises(BadMagic):
        decode_pmir(b"XXXX" + bytes(16))


def test_truncated_payload():
    raw = PmirHeader(10, 10, 4, 0).pack() + bytes(100)
    with pytest.raises(TruncatedPayload):
        decode_pmir(raw)
    with pytest.raises(TruncatedPayload):
        decode_pmir(b"PMIR\x01\x00")


def test_trailing_bytes_rejected():
    with pytest.raises(FormatError):
        decode_pmir(encode_pmir(np.zeros((1, 1, 4))) + b"\0")


def test_unsupported_version():
    raw = bytearray(encode_pmir(np.zeros((1, 1, 4))))
    raw[4] = 2
    with pytest.raises(UnsupportedVersion):
        decode_pmir(bytes(raw))


def test_bad_header_fields():
    for h, w, ch, dt in ((0, 1, 4, 0), (1, 1, 2, 0), (1, 1, 4, 7)):
        raw = struct.pack("<4sHIIBB4s", b"PMIR", 1, h, w, ch, dt, bytes(4))
        with pytest.raises(FormatError):
            decode_pmir(raw)


def _gray(path, arr):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path)


def test_quad_png_constant(tmp_path):
    for s in ("I0", "I45", "I90", "I135"):
        _gray(tmp_path / f"x_{s}.png", np.full((2, 2), 128))
    img = read_quad_png(tmp_path / "x")
    assert img.shape == (2, 2, 4) and np.all(img == 128.0)


def test_quad_png_channel_order(tmp_path, rng):
    img = rng.integers(0, 256, size=(3, 5, 4)).astype(float)
    write_quad_png(img, tmp_path / "scene")
    assert np.array_equal(read_quad_png(tmp_path / "scene"), img)
    assert find_quad_stems(tmp_path) == [str(tmp_path / "scene")]


def test_quad_png_missing_channel(tmp_path):
    for s in ("I0", "I45", "I135"):
        _gray(tmp_path / f"x_{s}.png", np.zeros((2, 2)))
    with pytest.raises(MissingChannel):
        read_quad_png(tmp_path / "x")


def test_quad_png_dimension_mismatch(tmp_path):
    for s in ("I0", "I90", "I135"):
        _gray(tmp_path / f"x_{s}.png", np.zeros((2, 2)))
    _gray(tmp_path / "x_I45.png", np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        read_quad_png(tmp_path / "x")


def test_read_rgb_png_and_pmir(tmp_path):
    img = np.arange(2 * 3 * 3, dtype=float).reshape(2, 3, 3)
    Image.fromarray(img.astype(np.uint8), mode="RGB").save(tmp_path / "a.png")
    write_pmir(img, tmp_path / "b.pmir")
    assert np.array_equal(read_rgb(tmp_path / "a.png"), img)
    assert np.array_equal(read_rgb(tmp_path / "b.pmir"), img)


def test_manifest_round_trip(tmp_path):
    for n in ("a.pmir", "b.png"):
        (tmp_path / n).write_bytes(b"")
    entries = [ManifestEntry(str(tmp_path / "a.pmir"), "POLAR", "train"),
               ManifestEntry(str(tmp_path / "b.png"), "RGB", "test")]
    write_manifest(entries, tmp_path / "m.tsv")
    assert read_manifest(tmp_path / "m.tsv") == entries


def test_manifest_errors(tmp_path):
    (tmp_path / "a.pmir").write_bytes(b"")
    m = tmp_path / "m.tsv"
    m.write_text("train\tPOLAR\ta.pmir\ntrain\tPOLAR\ta.pmir\n")
    with pytest.raises(FormatError):
        read_manifest(m)
    m.write_text("train\tPOLAR\tmissing.pmir\n")
    with pytest.raises(FileNotFoundError):
        read_manifest(m)
    m.write_text("holdout\tPOLAR\ta.pmir\n")
    with pytest.raises(FormatError):
        read_manifest(m)


def test_checkpoint_round_trip(tmp_path, rng):
    params = {"g.w": rng.normal(size=(2, 3, 3, 3)).astype(np.float32), "d.b": rng.normal(size=4)}
    write_checkpoint(params, tmp_path / "c.ptck")
    back = read_checkpoint(tmp_path / "c.ptck")
    assert sorted(back) == sorted(params)
    for k, v in params.items():
        assert back[k].dtype == v.dtype and back[k].tobytes() == v.tobytes()
    raw = encode_checkpoint(params)
    with pytest.raises(TruncatedPayload):
        decode_checkpoint(raw[:-3])
    with pytest.raises(BadMagic):
        decode_checkpoint(b"NOPE" + raw[4:])
