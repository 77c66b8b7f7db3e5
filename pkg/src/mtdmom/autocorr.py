"""Autocorrelations up to third order, for images and large measurements.

The order-q autocorrelation at shifts (l_1, ..., l_{q-1}) is the average over
all pixels i of z[i]*z[i+l_1]*...*z[i+l_{q-1}], with out-of-bounds reads
zero-padded and the divisor fixed to the full pixel count of z.  Shifts range
over {0..L-1}^2; the third-order table is stored dense with both symmetric
halves materialized.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

_MAGIC = b"MTDAC1"


@dataclass
class AutocorrSet:
    L: int
    a1: float
    a2: np.ndarray
    a3: np.ndarray
    norm_area: float

    def validate(self):
        L = self.L
        if self.a2.shape != (L, L) or self.a3.shape != (L, L, L, L):
            raise ValueError("autocorrelation table shapes do not match L")
        if not (np.isfinite(self.a1) and np.isfinite(self.a2).all()
                and np.isfinite(self.a3).all()):
            raise ValueError("autocorrelations contain non-finite entries")
        if self.a2[0, 0] < 0:
            raise ValueError("a2 at zero shift is a mean square, cannot be negative")
        dev = np.max(np.abs(self.a3 - self.a3.transpose(2, 3, 0, 1)))
        scale = max(1.0, float(np.max(np.abs(self.a3))))
        if dev > 1e-9 * scale:
            raise ValueError("third-order exchange symmetry violated")
        return self


def _finish(s1, s2, s3, area, L):
    # the pair (l1,l2)/(l2,l1) indexes one product; enforce exact equality
    a3 = (s3 + s3.transpose(2, 3, 0, 1)) / (2.0 * area)
    return AutocorrSet(L=L, a1=float(s1 / area), a2=s2 / area, a3=a3,
                       norm_area=float(area))


def autocorr_image(z, L) -> AutocorrSet:
    """Autocorrelations of a small image, normalized by its own pixel count."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("image must be 2-D")
    if L > min(z.shape):
        raise ValueError("shift range L exceeds the image side")
    s1, s2, s3 = kernels.frame_sums(z, z.shape[0], z.shape[1], L)
    return _finish(s1, s2, s3, z.size, L)


def _frame_of(m):
    # plain arrays pass through; anything measurement-like carries .data
    # (checked second: ndarray.data is its raw buffer, not pixel values)
    if isinstance(m, np.ndarray):
        return m
    return m.data if hasattr(m, "data") else np.asarray(m)


def _tile_sums(y, L, tile_rows):
    H, W = y.shape
    s1 = 0.0
    s2 = np.zeros((L, L))
    s3 = np.zeros((L, L, L, L))
    for r0 in range(0, H, tile_rows):
        r1 = min(H, r0 + tile_rows)
        band = np.ascontiguousarray(y[r0:min(H, r1 + L - 1), :], dtype=np.float64)
        t1, t2, t3 = kernels.frame_sums(band, r1 - r0, W, L)
        s1 += t1
        s2 += t2
        s3 += t3
    return s1, s2, s3


def autocorr_measurement(y, L, tile_rows=1024) -> AutocorrSet:
    """Empirical autocorrelations of one measurement or a list of them.

    Large frames are processed in row bands of ``tile_rows`` with a halo of
    L-1 rows, so memmapped measurements never load fully.  Sub-measurements
    are averaged with pixel-count weights: summed raw sums over summed areas.
    """
    items = y if isinstance(y, (list, tuple)) else [y]
    if not items:
        raise ValueError("no measurements given")
    if tile_rows < L:
        raise ValueError("tile_rows must be at least the shift range L")
    s1 = 0.0
    s2 = np.zeros((L, L))
    s3 = np.zeros((L, L, L, L))
    area = 0
    for item in items:
        frame = _frame_of(item)
        if min(frame.shape) < 2 * L:
            raise ValueError("measurement side must be at least 2L")
        t1, t2, t3 = _tile_sums(frame, L, tile_rows)
        s1 += t1
        s2 += t2
        s3 += t3
        area += frame.size
    return _finish(s1, s2, s3, area, L)


def autocorr_gradient(x, weights: AutocorrSet):
    """Adjoint of the autocorrelation map: sum_q sum_l w_q[l...] * da_x^q/dx.

    ``weights`` carries residual-shaped arrays in the a1/a2/a3 slots.  The
    divisor is the pixel count of x, matching autocorr_image.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.full(x.shape, float(weights.a1))
    g += kernels.ac2_adjoint(x, weights.a2)
    g += kernels.ac3_adjoint(x, weights.a3)
    return g / x.size


def save_autocorr(acs: AutocorrSet, path):
    acs.validate()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", acs.L))
        fh.write(struct.pack("<d", acs.a1))
        fh.write(np.ascontiguousarray(acs.a2, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(acs.a3, dtype="<f8").tobytes())


def load_autocorr(path) -> AutocorrSet:
    from .dataio import FormatError
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:len(_MAGIC)] != _MAGIC:
        raise FormatError(f"{path}: not an autocorrelation file")
    off = len(_MAGIC)
    (L,) = struct.unpack_from("<I", raw, off)
    off += 4
    need = off + 8 + 8 * (L * L + L ** 4)
    if len(raw) < need:
        raise FormatError(f"{path}: truncated autocorrelation file")
    (a1,) = struct.unpack_from("<d", raw, off)
    off += 8
    a2 = np.frombuffer(raw, dtype="<f8", count=L * L, offset=off).reshape(L, L)
    off += 8 * L * L
    a3 = np.frombuffer(raw, dtype="<f8", count=L ** 4, offset=off)
    a3 = a3.reshape(L, L, L, L)
    return AutocorrSet(L=int(L), a1=float(a1), a2=a2.copy(), a3=a3.copy(),
                       norm_area=float("nan")).validate()
