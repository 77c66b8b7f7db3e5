"""The moment equations relating measurement autocorrelations to target
autocorrelations, the noise bias terms, and the least-squares moment loss.

For a measurement y of density gamma built from target x with noise
variance sigma^2, the expected empirical autocorrelations satisfy

    a_y^q = gamma * a_x^q + b_q,   q = 1, 2, 3,

and recovery minimizes the plain sum of squared residuals over all shifts.
"""

from dataclasses import dataclass

import numpy as np

from .autocorr import AutocorrSet, autocorr_gradient, autocorr_image


@dataclass
class BiasTerms:
    b1: float
    b2: np.ndarray
    b3: np.ndarray


def derive_bias(sigma2, a_y1, L) -> BiasTerms:
    """Expected noise contribution to each empirical autocorrelation.

    Expanding E[(c + eps)...] for i.i.d. zero-mean Gaussian eps with
    variance sigma^2 over a clean frame c of per-pixel mean m:

      order 1: E[eps] = 0.
      order 2: the only surviving pairing is eps with itself, so
               sigma^2 at shift 0 and nothing elsewhere.
      order 3: one eps pair plus one clean factor; the pair forces two of
               the three read positions to coincide, which happens exactly
               on {l1=0}, {l2=0}, and {l1=l2}, each contributing
               sigma^2 * m (the sets overlap at the origin, so (0,0)
               receives 3 sigma^2 m).  The triple-eps term has odd order
               and vanishes.

    The clean mean m is not observable, but E[a_y^1] = m, so the empirical
    first moment is plugged in.  This is the large-N form: truncation of
    the shifted sums at the frame edge perturbs order 3 by O(L/N).
    """
    if sigma2 < 0:
        raise ValueError("variance cannot be negative")
    b2 = np.zeros((L, L))
    b2[0, 0] = sigma2
    hit = np.zeros((L, L, L, L))
    hit[0, 0, :, :] += 1.0
    hit[:, :, 0, 0] += 1.0
    idx = np.arange(L)
    hit[idx[:, None], idx[None, :], idx[:, None], idx[None, :]] += 1.0
    b3 = sigma2 * float(a_y1) * hit
    return BiasTerms(b1=0.0, b2=b2, b3=b3)


@dataclass
class MomentSystem:
    L: int
    gamma: float
    sigma2: float
    a_y: AutocorrSet
    bias: BiasTerms

    def validate(self):
        if not 0 < self.gamma <= 0.25 + 1e-12:
            raise ValueError(f"density {self.gamma} outside (0, 0.25]")
        if self.a_y.L != self.L:
            raise ValueError("measurement autocorrelations have a different L")
        return self


def build_system(a_y: AutocorrSet, gamma, sigma2) -> MomentSystem:
    bias = derive_bias(sigma2, a_y.a1, a_y.L)
    return MomentSystem(L=a_y.L, gamma=float(gamma), sigma2=float(sigma2),
                        a_y=a_y, bias=bias).validate()


def population_system(x, gamma) -> MomentSystem:
    """Noiseless system whose data are the exact scaled target moments."""
    x = np.asarray(x, dtype=np.float64)
    ax = autocorr_image(x, x.shape[0])
    a_y = AutocorrSet(L=ax.L, a1=gamma * ax.a1, a2=gamma * ax.a2,
                      a3=gamma * ax.a3, norm_area=ax.norm_area)
    return build_system(a_y, gamma, 0.0)


def residuals(x, sys: MomentSystem):
    ax = autocorr_image(np.asarray(x, dtype=np.float64), sys.L)
    r1 = sys.a_y.a1 - sys.gamma * ax.a1 - sys.bias.b1
    r2 = sys.a_y.a2 - sys.gamma * ax.a2 - sys.bias.b2
    r3 = sys.a_y.a3 - sys.gamma * ax.a3 - sys.bias.b3
    return r1, r2, r3


def loss(x, sys: MomentSystem) -> float:
    r1, r2, r3 = residuals(x, sys)
    return float(r1 * r1 + np.sum(r2 * r2) + np.sum(r3 * r3))


def loss_gradient(x, sys: MomentSystem):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (sys.L, sys.L):
        raise ValueError(f"iterate is {x.shape}, system expects side {sys.L}")
    r1, r2, r3 = residuals(x, sys)
    w = AutocorrSet(L=sys.L, a1=r1, a2=r2, a3=r3, norm_area=float(x.size))
    return -2.0 * sys.gamma * autocorr_gradient(x, w)


def loss_and_gradient(x, sys: MomentSystem):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (sys.L, sys.L):
        raise ValueError(f"iterate is {x.shape}, system expects side {sys.L}")
    r1, r2, r3 = residuals(x, sys)
    val = float(r1 * r1 + np.sum(r2 * r2) + np.sum(r3 * r3))
    w = AutocorrSet(L=sys.L, a1=r1, a2=r2, a3=r3, norm_area=float(x.size))
    return val, -2.0 * sys.gamma * autocorr_gradient(x, w)
