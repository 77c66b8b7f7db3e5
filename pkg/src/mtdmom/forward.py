"""Synthesis of well-separated multi-copy measurements, plain and
super-resolution, plus the SNR conventions used throughout.

A measurement is an N x N frame holding M translated copies of a small
target at top-left positions from {L, ..., N-L-1}^2, pairwise separated so
that no autocorrelation shift in {0..L-1}^2 can straddle two copies, plus
i.i.d. Gaussian noise.  Copy density is gamma = M L^2 / N^2.
"""

import csv
import math
import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import FormatError

_MAGIC = b"MTDMEAS1"

# origins this far apart (Chebyshev) keep supports a full image length apart
def _min_origin_gap(L):
    return 2 * L - 1


class PackingError(Exception):
    """The requested density cannot be packed under the separation rule."""

    def __init__(self, message, achieved=0):
        super().__init__(message)
        self.achieved = achieved


@dataclass
class PlacementPlan:
    N: int
    L_eff: int
    positions: np.ndarray

    @property
    def M(self):
        return len(self.positions)

    @property
    def gamma(self):
        return self.M * self.L_eff ** 2 / self.N ** 2

    def validate(self):
        L, N = self.L_eff, self.N
        pos = np.asarray(self.positions)
        if pos.size and (pos.min() < L or pos.max() > N - L - 1):
            raise ValueError("positions outside the admissible interior range")
        gap = _min_origin_gap(L)
        for i in range(len(pos)):
            d = np.abs(pos[i + 1:] - pos[i]).max(axis=1) if i + 1 < len(pos) else None
            if d is not None and d.size and d.min() < gap:
                raise ValueError("placement violates the separation rule")
        return self


@dataclass
class NoiseModel:
    sigma2: float = 0.0
    seed: Optional[int] = None


@dataclass
class Measurement:
    N: int
    data: np.ndarray
    sigma2: float
    plan: Optional[PlacementPlan] = None
    M: Optional[int] = None

    @property
    def copies(self):
        return self.plan.M if self.plan is not None else self.M


def plan_placements(N, L_eff, gamma, seed=None, attempt_factor=50) -> PlacementPlan:
    """Draw M = round(gamma N^2 / L_eff^2) separated positions by dart throwing.

    Rejection uses a coarse occupancy grid; after attempt_factor*M failed
    darts the density is declared unpackable.
    """
    if not 0 < gamma <= 0.25:
        raise PackingError(
            f"density {gamma} outside the packable range (0, 0.25]")
    if N <= 3 * L_eff:
        raise ValueError("frame side must exceed three image sides")
    M = int(round(gamma * N ** 2 / L_eff ** 2))
    rng = np.random.default_rng(seed)
    lo, hi = L_eff, N - L_eff - 1
    gap = _min_origin_gap(L_eff)
    cells = {}
    taken = np.empty((M, 2), dtype=np.int64)
    count = 0
    budget = attempt_factor * M
    while count < M and budget > 0:
        n = min(budget, max(64, M - count))
        darts = rng.integers(lo, hi + 1, size=(n, 2))
        budget -= n
        for r, c in darts:
            cr, cc = r // gap, c // gap
            ok = True
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    for j in cells.get((cr + dr, cc + dc), ()):
                        if max(abs(int(r) - taken[j, 0]), abs(int(c) - taken[j, 1])) < gap:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                taken[count] = (r, c)
                cells.setdefault((cr, cc), []).append(count)
                count += 1
                if count == M:
                    break
    if count < M:
        raise PackingError(
            f"placed only {count} of {M} copies at density {gamma}",
            achieved=count)
    return PlacementPlan(N=N, L_eff=L_eff, positions=taken[:count])


def _as_seedseq(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _noise_bands(N, sigma2, seed, tile_rows):
    """Yield (row0, noise_band) with an RNG stream split per band, so the
    result is independent of how many bands are consumed at once."""
    sigma = math.sqrt(sigma2)
    children = _as_seedseq(seed).spawn(math.ceil(N / tile_rows))
    for k, r0 in enumerate(range(0, N, tile_rows)):
        rows = min(tile_rows, N - r0)
        rng = np.random.default_rng(children[k])
        yield r0, rng.normal(0.0, sigma, size=(rows, N))


def _clean_band(x, plan, r0, rows):
    band = np.zeros((rows, plan.N))
    L = plan.L_eff
    for r, c in plan.positions:
        if r + L <= r0 or r >= r0 + rows:
            continue
        t0 = max(r, r0)
        t1 = min(r + L, r0 + rows)
        band[t0 - r0:t1 - r0, c:c + L] += x[t0 - r:t1 - r, :]
    return band


def synthesize(x, plan: PlacementPlan, noise: NoiseModel = NoiseModel(),
               tile_rows=1024) -> Measurement:
    """Plant copies of x at the planned positions and add Gaussian noise."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (plan.L_eff, plan.L_eff):
        raise ValueError(
            f"target is {x.shape}, plan expects side {plan.L_eff}")
    y = np.zeros((plan.N, plan.N))
    L = plan.L_eff
    for r, c in plan.positions:
        y[r:r + L, c:c + L] += x
    if noise.sigma2 > 0:
        for r0, band in _noise_bands(plan.N, noise.sigma2, noise.seed, tile_rows):
            y[r0:r0 + band.shape[0], :] += band
    return Measurement(N=plan.N, data=y, sigma2=float(noise.sigma2), plan=plan)


@dataclass
class DownsampleOp:
    L_high: int
    L_low: int

    def __post_init__(self):
        if self.L_high % self.L_low != 0:
            raise ValueError("high side must be divisible by low side")

    @property
    def stride(self):
        return self.L_high // self.L_low

    def apply(self, x_high):
        x_high = np.asarray(x_high)
        if x_high.shape != (self.L_high, self.L_high):
            raise ValueError("image does not match the high-res side")
        s = self.stride
        return np.ascontiguousarray(x_high[::s, ::s], dtype=np.float64)

    def adjoint(self, g_low):
        g_low = np.asarray(g_low)
        if g_low.shape != (self.L_low, self.L_low):
            raise ValueError("gradient does not match the low-res side")
        out = np.zeros((self.L_high, self.L_high))
        s = self.stride
        out[::s, ::s] = g_low
        return out

    def mask(self):
        m = np.zeros((self.L_high, self.L_high), dtype=bool)
        s = self.stride
        m[::s, ::s] = True
        return m


def identity_op(L) -> DownsampleOp:
    return DownsampleOp(L_high=L, L_low=L)


def synthesize_superres(x_high, P: DownsampleOp, plan: PlacementPlan,
                        noise: NoiseModel = NoiseModel()) -> Measurement:
    """Measurement containing down-sampled copies P(x_high)."""
    if plan.L_eff != P.L_low:
        raise ValueError("plan copy side must equal the low-res side")
    return synthesize(P.apply(x_high), plan, noise)


def snr(x, sigma2) -> float:
    """Signal energy over effective target area times noise variance."""
    if sigma2 < 0:
        raise ValueError("variance cannot be negative")
    if sigma2 == 0:
        return math.inf
    x = np.asarray(x)
    L = x.shape[0]
    return float(np.sum(x * x) / (0.25 * math.pi * L * L * sigma2))


def sigma_for_snr(x, target_snr) -> float:
    """Noise variance giving the requested SNR for this target."""
    if target_snr <= 0:
        raise ValueError("SNR must be positive")
    x = np.asarray(x)
    energy = float(np.sum(x * x))
    if energy == 0:
        raise ValueError("zero image has no finite-SNR noise level")
    L = x.shape[0]
    return energy / (0.25 * math.pi * L * L * target_snr)


def synthesize_set(x, N, count, gamma, sigma2, seed, P: DownsampleOp = None):
    """Independent sub-measurements of the same target, split-seeded."""
    master = _as_seedseq(seed)
    children = master.spawn(2 * count)
    out = []
    for k in range(count):
        plan_seed, noise_seed = children[2 * k], children[2 * k + 1]
        L_eff = P.L_low if P is not None else np.asarray(x).shape[0]
        plan = plan_placements(N, L_eff, gamma, seed=plan_seed)
        noise = NoiseModel(sigma2=sigma2, seed=noise_seed)
        if P is not None:
            out.append(synthesize_superres(x, P, plan, noise))
        else:
            out.append(synthesize(x, plan, noise))
    return out


def combined_gamma(measurements, L_eff) -> float:
    """Density of a measurement set: total copy area over total pixel area."""
    copies = sum(m.copies for m in measurements)
    pixels = sum(m.N ** 2 for m in measurements)
    return copies * L_eff ** 2 / pixels


_HEADER = "<8sIdI"


def write_measurement(meas: Measurement, path):
    """MTDMEAS1 container plus a plan sidecar CSV when a plan is attached."""
    path = str(path)
    copies = meas.copies or 0
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", meas.N))
        fh.write(struct.pack("<d", meas.sigma2))
        fh.write(struct.pack("<I", copies))
        arr = np.ascontiguousarray(meas.data, dtype="<f4")
        fh.write(arr.tobytes())
    if meas.plan is not None:
        with open(path + ".plan.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "row", "col"])
            for m, (r, c) in enumerate(meas.plan.positions):
                writer.writerow([m, int(r), int(c)])


def read_measurement(path) -> Measurement:
    """Open a measurement with its pixels memory-mapped, not loaded.

    The plan sidecar is diagnostic output only and is not read back; the
    copy count comes from the header.
    """
    path = str(path)
    header = struct.calcsize(_HEADER)
    with open(path, "rb") as fh:
        raw = fh.read(header)
    if len(raw) < header or raw[:8] != _MAGIC:
        raise FormatError(f"{path}: not a measurement container")
    _, N, sigma2, M = struct.unpack(_HEADER, raw)
    if os.path.getsize(path) < header + 4 * N * N:
        raise FormatError(f"{path}: truncated pixel payload")
    data = np.memmap(path, dtype="<f4", mode="r", offset=header, shape=(N, N))
    return Measurement(N=int(N), data=data, sigma2=float(sigma2), M=int(M))
