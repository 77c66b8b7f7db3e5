"""Score fields s(x) = grad log p(x) behind one interface: a zero score,
analytic Gaussian and Gaussian-mixture scores, and a serialized neural
network in the SCORENET1 weight format produced by the trainer."""

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import FormatError

SCORENET_MAGIC = b"SCORENET1"
LAYER_CONV, LAYER_DENSE, LAYER_ELU, LAYER_SOFTPLUS = 0, 1, 2, 3


class ScoreProvider:
    kind = "abstract"
    L: int

    def score(self, x):
        raise NotImplementedError

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.L, self.L):
            raise ValueError(f"input is {x.shape}, provider expects side {self.L}")
        return x


class ZeroScore(ScoreProvider):
    kind = "zero"

    def __init__(self, L):
        self.L = L

    def score(self, x):
        return np.zeros_like(self._check(x))


class GaussianScore(ScoreProvider):
    """Score of N(mean, var I): -(x - mean)/var, elementwise."""

    kind = "gaussian"

    def __init__(self, mean, var):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = float(var)
        if self.var <= 0:
            raise ValueError("variance must be positive")
        self.L = self.mean.shape[0]

    def score(self, x):
        return -(self._check(x) - self.mean) / self.var

    def smoothed(self, sigma_dsm):
        """Score of the same Gaussian convolved with N(0, sigma_dsm^2 I)."""
        if sigma_dsm < 0:
            raise ValueError("smoothing level cannot be negative")
        return GaussianScore(self.mean, self.var + sigma_dsm ** 2)


class GmmScore(ScoreProvider):
    """Score of a K-component isotropic Gaussian mixture.

    s(x) = sum_k r_k(x) * (-(x - mu_k)/v_k), with responsibilities r_k
    computed in log space for stability.
    """

    kind = "gmm"

    def __init__(self, weights, means, variances):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64)
        self.variances = np.asarray(variances, dtype=np.float64)
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("component weights must be positive and sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("component variances must be positive")
        if self.means.ndim != 3 or len(self.means) != len(self.weights):
            raise ValueError("means must be one image per component")
        self.L = self.means.shape[1]

    def _log_resp(self, x):
        d = self.L * self.L
        sq = np.array([float(np.sum((x - mu) ** 2)) for mu in self.means])
        logp = (np.log(self.weights) - 0.5 * d * np.log(2 * math.pi * self.variances)
                - 0.5 * sq / self.variances)
        top = np.max(logp)
        return logp - (top + math.log(np.sum(np.exp(logp - top))))

    def log_density(self, x):
        x = self._check(x)
        d = self.L * self.L
        sq = np.array([float(np.sum((x - mu) ** 2)) for mu in self.means])
        logp = (np.log(self.weights) - 0.5 * d * np.log(2 * math.pi * self.variances)
                - 0.5 * sq / self.variances)
        top = float(np.max(logp))
        return top + math.log(np.sum(np.exp(logp - top)))

    def score(self, x):
        x = self._check(x)
        resp = np.exp(self._log_resp(x))
        out = np.zeros_like(x)
        for r, mu, v in zip(resp, self.means, self.variances):
            out += r * (-(x - mu) / v)
        return out

    def smoothed(self, sigma_dsm):
        return GmmScore(self.weights, self.means, self.variances + sigma_dsm ** 2)

    def sample(self, rng):
        k = rng.choice(len(self.weights), p=self.weights)
        return self.means[k] + math.sqrt(self.variances[k]) * rng.normal(
            size=(self.L, self.L))


def _elu(a):
    out = np.where(a > 0, a, np.expm1(np.minimum(a, 0.0)))
    return out


def _softplus(a):
    return np.logaddexp(0.0, a)


def _conv_same(feat, weight, bias):
    """Cross-correlation with zero same-padding.

    feat: (C_in, H, W); weight: (C_out, C_in, k, k); bias: (C_out,).
    """
    c_in, H, W = feat.shape
    c_out, c_in2, k, _ = weight.shape
    if c_in != c_in2:
        raise ValueError("channel mismatch between activation and weights")
    p = k // 2
    padded = np.zeros((c_in, H + 2 * p, W + 2 * p))
    padded[:, p:p + H, p:p + W] = feat
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))
    # windows: (C_in, H, W, k, k) -> contract with (C_out, C_in, k, k)
    out = np.tensordot(weight, windows, axes=([1, 2, 3], [0, 3, 4]))
    return out + bias[:, None, None]


@dataclass
class ScoreNetLayer:
    kind: int
    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None


class NeuralScore(ScoreProvider):
    """Forward evaluation of a trained score network."""

    kind = "neural"

    def __init__(self, L, sigma_dsm, layers):
        self.L = int(L)
        self.sigma_dsm = float(sigma_dsm)
        self.layers = layers
        self._validate_shapes()

    def _validate_shapes(self):
        channels = 1
        for i, layer in enumerate(self.layers):
            if layer.kind == LAYER_CONV:
                c_out, c_in, k, k2 = layer.weight.shape
                if k != k2:
                    raise FormatError("convolution kernels must be square")
                if c_in != channels:
                    raise FormatError(
                        f"layer {i} expects {c_in} channels, gets {channels}")
                if layer.bias.shape != (c_out,):
                    raise FormatError(f"layer {i} bias shape mismatch")
                channels = c_out
            elif layer.kind == LAYER_DENSE:
                if layer.weight.shape[1] != channels * self.L * self.L:
                    raise FormatError(f"layer {i} dense input size mismatch")
                if layer.weight.shape[0] % (self.L * self.L) != 0:
                    raise FormatError(f"layer {i} dense output not grid-shaped")
                channels = layer.weight.shape[0] // (self.L * self.L)
            elif layer.kind not in (LAYER_ELU, LAYER_SOFTPLUS):
                raise FormatError(f"layer {i} has unknown kind {layer.kind}")
        if channels != 1:
            raise FormatError("network must end with a single channel")

    def score(self, x):
        feat = self._check(x)[None, :, :]
        for layer in self.layers:
            if layer.kind == LAYER_CONV:
                feat = _conv_same(feat, layer.weight, layer.bias)
            elif layer.kind == LAYER_DENSE:
                flat = layer.weight @ feat.reshape(-1) + layer.bias
                feat = flat.reshape(-1, self.L, self.L)
            elif layer.kind == LAYER_ELU:
                feat = _elu(feat)
            else:
                feat = _softplus(feat)
        out = feat[0]
        if not np.isfinite(out).all():
            raise ArithmeticError("non-finite score activation, weights corrupt")
        return out


def save_scorenet(path, net: NeuralScore, test_input) -> None:
    """Serialize a network with its embedded parity test vector.

    The expected output is computed from the float32-quantized weights that
    actually land in the file, so a save and reload round-trips bitwise.
    """
    test_input = np.asarray(test_input, dtype=np.float32)
    if test_input.shape != (net.L, net.L):
        raise ValueError("test input must match the network side")
    stored = [ScoreNetLayer(l.kind,
                            None if l.weight is None
                            else l.weight.astype(np.float32).astype(np.float64),
                            None if l.bias is None
                            else l.bias.astype(np.float32).astype(np.float64))
              for l in net.layers]
    as_stored = NeuralScore(net.L, net.sigma_dsm, stored)
    expected = as_stored.score(test_input.astype(np.float64)).astype(np.float32)
    blob = bytearray()
    blob += SCORENET_MAGIC
    blob += struct.pack("<I", 1)
    blob += struct.pack("<I", net.L)
    blob += struct.pack("<f", net.sigma_dsm)
    blob += struct.pack("<I", len(net.layers))
    for layer in net.layers:
        blob += struct.pack("<B", layer.kind)
        if layer.kind == LAYER_CONV:
            c_out, c_in, k, _ = layer.weight.shape
            blob += struct.pack("<III", c_in, c_out, k)
            blob += np.ascontiguousarray(layer.weight, dtype="<f4").tobytes()
            blob += np.ascontiguousarray(layer.bias, dtype="<f4").tobytes()
        elif layer.kind == LAYER_DENSE:
            n_out, n_in = layer.weight.shape
            blob += struct.pack("<II", n_in, n_out)
            blob += np.ascontiguousarray(layer.weight, dtype="<f4").tobytes()
            blob += np.ascontiguousarray(layer.bias, dtype="<f4").tobytes()
    blob += test_input.astype("<f4").tobytes()
    blob += expected.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.off = 0

    def take(self, n):
        if self.off + n > len(self.data):
            raise FormatError("weight file truncated")
        chunk = self.data[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count, shape):
        arr = np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float64)
        return arr.reshape(shape)


def load_scorenet(data) -> "NeuralScore":
    """Decode SCORENET1 bytes or a path to them; shapes are validated on
    construction so a truncated file never yields a partial network."""
    if not isinstance(data, (bytes, bytearray)):
        with open(data, "rb") as fh:
            data = fh.read()
    r = _Reader(data)
    if r.take(len(SCORENET_MAGIC)) != SCORENET_MAGIC:
        raise FormatError("not a SCORENET1 weight file")
    (version,) = r.unpack("<I")
    if version != 1:
        raise FormatError(f"unsupported weight format version {version}")
    (L,) = r.unpack("<I")
    (sigma_dsm,) = r.unpack("<f")
    (layer_count,) = r.unpack("<I")
    layers = []
    for _ in range(layer_count):
        (kind,) = r.unpack("<B")
        if kind == LAYER_CONV:
            c_in, c_out, k = r.unpack("<III")
            weight = r.floats(c_out * c_in * k * k, (c_out, c_in, k, k))
            bias = r.floats(c_out, (c_out,))
            layers.append(ScoreNetLayer(kind, weight, bias))
        elif kind == LAYER_DENSE:
            n_in, n_out = r.unpack("<II")
            weight = r.floats(n_out * n_in, (n_out, n_in))
            bias = r.floats(n_out, (n_out,))
            layers.append(ScoreNetLayer(kind, weight, bias))
        elif kind in (LAYER_ELU, LAYER_SOFTPLUS):
            layers.append(ScoreNetLayer(kind))
        else:
            raise FormatError(f"unknown layer kind {kind}")
    net = NeuralScore(L, sigma_dsm, layers)
    net.test_input = r.floats(L * L, (L, L))
    net.test_output = r.floats(L * L, (L, L))
    return net


def verify_scorenet(net: NeuralScore) -> float:
    """Max absolute deviation between the stored and recomputed test vector.

    The stored expectation is float32, so the recomputed output is compared
    at float32 precision; producers with float32 arithmetic stay within the
    parity tolerance through accumulation-order differences only.
    """
    if not hasattr(net, "test_input"):
        raise FormatError("network carries no parity test vector")
    got = net.score(net.test_input).astype(np.float32).astype(np.float64)
    return float(np.max(np.abs(got - net.test_output)))


def make_provider(kind, L, **kw) -> ScoreProvider:
    """Uniform construction point used by the CLI and the sweep driver."""
    if kind in (None, "none", "zero"):
        return ZeroScore(L)
    if kind == "gaussian":
        return GaussianScore(kw["mean"], kw["var"])
    if kind == "gmm":
        return GmmScore(kw["weights"], kw["means"], kw["variances"])
    if kind == "neural":
        net = load_scorenet(kw["path"])
        if net.L != L:
            raise ValueError(f"weights are for side {net.L}, run uses {L}")
        return net
    raise ValueError(f"unknown prior kind {kind!r}")
