"""Dataset ingestion (IDX), preprocessing, and raster emission."""

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage


class FormatError(Exception):
    """A file does not follow its declared binary format."""


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def parse_idx(data: bytes):
    """Decode an IDX byte tensor into a list of [0,1]-scaled images.

    A 1-D IDX file (labels) decodes to a single integer vector instead.
    """
    if len(data) < 4:
        raise FormatError("IDX header truncated")
    zero1, zero2, dtype, ndim = struct.unpack_from(">BBBB", data, 0)
    if zero1 != 0 or zero2 != 0 or dtype != 0x08:
        raise FormatError("not an unsigned-byte IDX file")
    if len(data) < 4 + 4 * ndim:
        raise FormatError("IDX dimension block truncated")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 0
    payload = data[4 + 4 * ndim:]
    if len(payload) < count:
        raise FormatError(f"IDX payload holds {len(payload)} bytes, needs {count}")
    flat = np.frombuffer(payload, dtype=np.uint8, count=count)
    if ndim == 1:
        return flat.astype(np.int64)
    if ndim != 3:
        raise FormatError(f"unsupported IDX rank {ndim}")
    n, h, w = dims
    cube = flat.reshape(n, h, w).astype(np.float64) / 255.0
    return [cube[i] for i in range(n)]


def parse_idx_file(path):
    with open(path, "rb") as fh:
        return parse_idx(fh.read())


def write_idx_images(images, path):
    """Write [0,1]-scaled images as an unsigned-byte rank-3 IDX file."""
    arr = np.stack([quantize_u8(np.asarray(im)) for im in images])
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", IDX_IMAGES_MAGIC))
        fh.write(struct.pack(">III", *arr.shape))
        fh.write(arr.tobytes())


def write_idx_labels(labels, path):
    arr = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", IDX_LABELS_MAGIC))
        fh.write(struct.pack(">I", arr.size))
        fh.write(arr.tobytes())


@dataclass
class DatasetSpec:
    source: str
    crop_margin: int = 0
    L: int = 14
    normalization: str = "max1"

    def validate(self):
        if self.crop_margin < 0:
            raise ValueError("crop margin cannot be negative")
        if self.L < 1:
            raise ValueError("target side must be at least 1")
        if self.normalization not in ("max1", "unitfro", "none"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        return self


def resize_bilinear(img, out_h, out_w):
    """Bilinear resampling with align-corners=false pixel-center mapping."""
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape

    def axis_coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        lo = np.minimum(lo, n_in - 2) if n_in > 1 else np.zeros_like(lo)
        frac = src - lo
        return lo, frac

    r0, fr = axis_coords(out_h, in_h)
    c0, fc = axis_coords(out_w, in_w)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    fr = fr[:, None]
    fc = fc[None, :]
    top = img[np.ix_(r0, c0)] * (1 - fc) + img[np.ix_(r0, c1)] * fc
    bot = img[np.ix_(r1, c0)] * (1 - fc) + img[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def crop_and_resize(img, spec: DatasetSpec):
    img = np.asarray(img, dtype=np.float64)
    m = spec.crop_margin
    if 2 * m >= min(img.shape):
        raise ValueError("crop margin leaves no interior")
    inner = img[m:img.shape[0] - m, m:img.shape[1] - m]
    if inner.shape == (spec.L, spec.L):
        return inner.copy()
    return resize_bilinear(inner, spec.L, spec.L)


def normalize_image(img, mode):
    img = np.asarray(img, dtype=np.float64)
    if mode == "none":
        return img.copy()
    if mode == "max1":
        peak = float(np.max(np.abs(img)))
        return img / peak if peak > 0 else img.copy()
    if mode == "unitfro":
        norm = float(np.linalg.norm(img))
        return img / norm if norm > 0 else img.copy()
    raise ValueError(f"unknown normalization {mode!r}")


def load_dataset(spec: DatasetSpec):
    spec.validate()
    images = parse_idx_file(spec.source)
    return [normalize_image(crop_and_resize(im, spec), spec.normalization)
            for im in images]


def quantize_u8(img):
    """Map [0,1] reals to bytes, clipping first, ties rounding up."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def write_raster(img, path):
    """Write an 8-bit grayscale PNG or PGM, by file extension."""
    img = np.asarray(img)
    if not np.isfinite(img).all():
        raise ValueError("raster values must be finite")
    q = quantize_u8(img)
    path = str(path)
    if path.endswith(".pgm"):
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (q.shape[1], q.shape[0]))
            fh.write(q.tobytes())
    elif path.endswith(".png"):
        PILImage.fromarray(q, mode="L").save(path)
    else:
        raise ValueError("raster path must end in .png or .pgm")


def read_raster(path):
    """Read an 8-bit grayscale raster back to [0,1] floats."""
    path = str(path)
    if path.endswith(".pgm"):
        with open(path, "rb") as fh:
            raw = fh.read()
        if not raw.startswith(b"P5"):
            raise FormatError(f"{path}: not a binary PGM")
        fields = []
        pos = 2
        while len(fields) < 3:
            while pos < len(raw) and raw[pos:pos + 1].isspace():
                pos += 1
            if raw[pos:pos + 1] == b"#":
                while pos < len(raw) and raw[pos] != 0x0A:
                    pos += 1
                continue
            start = pos
            while pos < len(raw) and not raw[pos:pos + 1].isspace():
                pos += 1
            fields.append(int(raw[start:pos]))
        pos += 1
        w, h, maxval = fields
        if maxval != 255:
            raise FormatError(f"{path}: only 8-bit PGM supported")
        data = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=pos)
        return data.reshape(h, w).astype(np.float64) / 255.0
    arr = np.asarray(PILImage.open(path).convert("L"))
    return arr.astype(np.float64) / 255.0
