"""Byte-tensor parsing, preprocessing, quantization, and raster round trips."""

import struct

import numpy as np
import pytest

from mtdmom.dataio import (DatasetSpec, FormatError, crop_and_resize,
                           load_dataset, normalize_image, parse_idx,
                           parse_idx_file, quantize_u8, read_raster,
                           resize_bilinear, write_idx_images,
                           write_idx_labels, write_raster)

from oracles import bilinear_reference


def _idx_images(dims, payload):
    return struct.pack(">I", 0x00000803) + struct.pack(
        f">{len(dims)}I", *dims) + bytes(payload)


# ---------------------------------------------------------------- idx


def test_idx_bytes_scale_to_unit_interval():
    images = parse_idx(_idx_images((1, 2, 2), [0, 255, 0, 255]))
    assert len(images) == 1
    assert np.array_equal(images[0], [[0.0, 1.0], [0.0, 1.0]])


def test_idx_zero_images_is_empty():
    assert parse_idx(_idx_images((0, 28, 28), [])) == []


def test_idx_labels_decode_to_integer_vector():
    data = struct.pack(">I", 0x00000801) + struct.pack(">I", 3) + bytes([7, 0, 9])
    labels = parse_idx(data)
    assert labels.dtype == np.int64
    assert labels.tolist() == [7, 0, 9]


def test_idx_rejects_malformed_input():
    good = _idx_images((1, 2, 2), [0, 255, 0, 255])
    bad = [
        b"",                                   # empty
        good[:3],                              # header truncated
        good[:10],                             # dimension block truncated
        good[:-1],                             # payload truncated
        b"\x01" + good[1:],                    # nonzero pad byte
        good[:2] + b"\x0d" + good[3:],         # wrong element type
        struct.pack(">I", 0x00000802) + struct.pack(">II", 2, 2) + bytes(4),
    ]
    for data in bad:
        with pytest.raises(FormatError):
            parse_idx(data)


def test_idx_write_read_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    images = [rng.integers(0, 256, size=(5, 4)).astype(np.float64) / 255.0
              for _ in range(3)]
    path = tmp_path / "imgs.idx"
    write_idx_images(images, path)
    back = parse_idx_file(path)
    assert len(back) == 3
    for a, b in zip(images, back):
        assert np.array_equal(a, b)

    lpath = tmp_path / "labels.idx"
    write_idx_labels([3, 1, 4], lpath)
    assert parse_idx_file(lpath).tolist() == [3, 1, 4]


# ---------------------------------------------------------------- resize


def test_resize_matches_scalar_reference():
    rng = np.random.default_rng(1)
    for in_shape, out_shape in [((4, 4), (2, 2)), ((2, 2), (4, 4)),
                                ((3, 5), (7, 4)), ((1, 6), (3, 3)),
                                ((28, 28), (14, 14))]:
        img = rng.random(in_shape)
        got = resize_bilinear(img, *out_shape)
        ref = bilinear_reference(img, *out_shape)
        assert np.max(np.abs(got - ref)) < 1e-12


def test_resize_identity_and_constants():
    rng = np.random.default_rng(2)
    img = rng.random((6, 6))
    assert np.array_equal(resize_bilinear(img, 6, 6), img)
    const = np.full((5, 7), 0.7)
    assert np.allclose(resize_bilinear(const, 3, 11), 0.7, atol=1e-15)


def test_resize_halving_averages_blocks():
    checker = np.indices((4, 4)).sum(axis=0) % 2 == 0
    out = resize_bilinear(checker.astype(np.float64), 2, 2)
    assert np.allclose(out, 0.5, atol=1e-15)


# ---------------------------------------------------------------- crop


def test_crop_margin_strips_border():
    img = np.zeros((6, 6))
    img[1:5, 1:5] = 1.0
    spec = DatasetSpec(source="", crop_margin=1, L=4, normalization="none")
    assert np.array_equal(crop_and_resize(img, spec), np.ones((4, 4)))


def test_crop_and_resize_keeps_constant_level():
    img = np.full((28, 28), 0.7)
    spec = DatasetSpec(source="", crop_margin=0, L=14, normalization="none")
    out = crop_and_resize(img, spec)
    assert out.shape == (14, 14)
    assert np.allclose(out, 0.7, atol=1e-15)


def test_crop_returns_independent_copy_when_size_matches():
    img = np.ones((4, 4))
    spec = DatasetSpec(source="", L=4)
    out = crop_and_resize(img, spec)
    out[0, 0] = 5.0
    assert img[0, 0] == 1.0


def test_crop_margin_must_leave_interior():
    spec = DatasetSpec(source="", crop_margin=3, L=2)
    with pytest.raises(ValueError):
        crop_and_resize(np.ones((6, 6)), spec)


# ---------------------------------------------------------------- normalize


def test_normalization_modes():
    img = np.array([[0.2, -0.8], [0.4, 0.0]])
    assert np.max(np.abs(normalize_image(img, "max1"))) == 1.0
    assert abs(np.linalg.norm(normalize_image(img, "unitfro")) - 1.0) < 1e-15
    assert np.array_equal(normalize_image(img, "none"), img)
    zero = np.zeros((2, 2))
    assert np.array_equal(normalize_image(zero, "max1"), zero)
    assert np.array_equal(normalize_image(zero, "unitfro"), zero)
    with pytest.raises(ValueError):
        normalize_image(img, "l2")


def test_dataset_spec_validation():
    for kw in [dict(crop_margin=-1), dict(L=0), dict(normalization="peak")]:
        with pytest.raises(ValueError):
            DatasetSpec(source="", **kw).validate()


def test_load_dataset_pipeline(tmp_path):
    rng = np.random.default_rng(3)
    images = [rng.random((8, 8)) for _ in range(3)]
    path = tmp_path / "set.idx"
    write_idx_images(images, path)
    spec = DatasetSpec(source=str(path), crop_margin=1, L=4,
                       normalization="max1")
    out = load_dataset(spec)
    assert len(out) == 3
    for im in out:
        assert im.shape == (4, 4)
        assert abs(np.max(np.abs(im)) - 1.0) < 1e-15


# ---------------------------------------------------------------- quantize


def test_quantization_examples():
    vals = np.array([[0.0, 0.5, 1.0], [-0.2, 1.7, 127.4 / 255.0]])
    q = quantize_u8(vals)
    assert q.tolist() == [[0, 128, 255], [0, 255, 127]]


def test_quantization_inverts_byte_scaling():
    bytes_in = np.arange(256, dtype=np.uint8).reshape(16, 16)
    assert np.array_equal(quantize_u8(bytes_in / 255.0), bytes_in)


# ---------------------------------------------------------------- raster


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, size=(5, 7)).astype(np.float64) / 255.0
    path = tmp_path / "img.pgm"
    write_raster(img, path)
    assert np.array_equal(read_raster(path), img)


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, size=(6, 3)).astype(np.float64) / 255.0
    path = tmp_path / "img.png"
    write_raster(img, path)
    assert np.array_equal(read_raster(path), img)


def test_pgm_reader_skips_comments(tmp_path):
    path = tmp_path / "c.pgm"
    payload = bytes(range(12))
    path.write_bytes(b"P5\n# made by hand\n4 3\n255\n" + payload)
    img = read_raster(path)
    assert img.shape == (3, 4)
    assert np.array_equal(quantize_u8(img).ravel(), np.frombuffer(payload, np.uint8))


def test_raster_guards(tmp_path):
    with pytest.raises(ValueError):
        write_raster(np.array([[np.nan]]), tmp_path / "x.png")
    with pytest.raises(ValueError):
        write_raster(np.ones((2, 2)), tmp_path / "x.bmp")
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(FormatError):
        read_raster(bad)
    deep = tmp_path / "deep.pgm"
    deep.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(FormatError):
        read_raster(deep)
