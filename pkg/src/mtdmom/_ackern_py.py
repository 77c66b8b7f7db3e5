"""Pure-NumPy autocorrelation kernels.

Fallback backend used when the compiled extension is unavailable (or forced
via ``MTDMOM_BACKEND=pure``).  Semantics are identical to ``_ackern``:
zero-padded shifted-product sums over the non-negative shift square
{0..L-1}^2, plus the residual-weighted adjoints.

Two strategies, chosen by problem size:

* small frames (whole images, recovery iterates): a patch matrix
  ``X[l, j] = z[j + l]`` turns the sums and adjoints into BLAS products;
* large frames (measurement tiles): per-shift factorization — for fixed l1,
  the third-order row over l2 is the cross-correlation of
  ``u = z * shift(z, l1)`` against z, evaluated with zero-padded real FFTs.

Both agree with the brute-force oracle to ~1e-12 and with the compiled
backend to the same level (accumulation order differs, exact zero-padding
semantics do not).
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.fft import irfft2, next_fast_len, rfft2

# Above this many patch-matrix elements (core pixels x L^2), switch to FFTs.
_PATCH_BUDGET = 3_000_000


def _pos_shift_matrix(frame, core_h, core_w, L):
    """Rows are positive shifts: X[(lr,lc), (jr,jc)] = frame[jr+lr, jc+lc].

    Reads beyond the frame are zero.  Returns a dense (L*L, core_h*core_w)
    array.
    """
    need_h, need_w = core_h + L - 1, core_w + L - 1
    H, W = frame.shape
    if H < need_h or W < need_w:
        padded = np.zeros((max(H, need_h), max(W, need_w)))
        padded[:H, :W] = frame
    else:
        padded = frame
    s0, s1 = padded.strides
    view = as_strided(padded, shape=(L, L, core_h, core_w), strides=(s0, s1, s0, s1))
    return view.reshape(L * L, core_h * core_w)


def _neg_shift_matrix(x, L):
    """Rows are negative shifts: X[(lr,lc), (jr,jc)] = x[jr-lr, jc-lc]."""
    n0, n1 = x.shape
    padded = np.zeros((n0 + L - 1, n1 + L - 1))
    padded[L - 1 :, L - 1 :] = x
    s0, s1 = padded.strides
    view = as_strided(padded, shape=(L, L, n0, n1), strides=(s0, s1, s0, s1))
    return view[::-1, ::-1].reshape(L * L, n0 * n1)


def frame_sums(tile, core_h, core_w, L):
    """Raw autocorrelation sums of one frame (or tile-with-halo).

    Sums run over positions i in the core region [0,core_h)x[0,core_w);
    shifted reads i+l may extend into the rest of ``tile`` (the halo) and
    are zero beyond it.  Returns (s1, s2, s3) with
    s1 = sum z[i], s2[l] = sum z[i]z[i+l], s3[l1,l2] = sum z[i]z[i+l1]z[i+l2].
    s3 is (L,L,L,L); exact exchange symmetry is enforced by the caller.
    """
    tile = np.ascontiguousarray(tile, dtype=np.float64)
    if core_h * core_w * L * L <= _PATCH_BUDGET:
        return _sums_patch(tile, core_h, core_w, L)
    return _sums_fft(tile, core_h, core_w, L)


def _sums_patch(tile, core_h, core_w, L):
    core = np.ascontiguousarray(tile[:core_h, :core_w])
    zc = core.reshape(-1)
    X = _pos_shift_matrix(tile, core_h, core_w, L)
    s2 = (X @ zc).reshape(L, L)
    s3 = ((X * zc) @ X.T).reshape(L, L, L, L)
    return float(zc.sum()), s2, s3


def _sums_fft(tile, core_h, core_w, L):
    H, W = tile.shape
    core = tile[:core_h, :core_w]
    # Padded size >= H + L kills circular aliasing for lags in [0, L).
    sh, sw = next_fast_len(H + L), next_fast_len(W + L)
    Ft = rfft2(tile, s=(sh, sw))
    Fc = rfft2(core, s=(sh, sw))
    s2 = irfft2(np.conj(Fc) * Ft, s=(sh, sw))[:L, :L].copy()
    s3 = np.zeros((L, L, L, L))
    for lr in range(L):
        uh = min(core_h, H - lr)
        if uh <= 0:
            continue
        for lc in range(L):
            uw = min(core_w, W - lc)
            if uw <= 0:
                continue
            u = tile[:uh, :uw] * tile[lr : lr + uh, lc : lc + uw]
            Fu = rfft2(u, s=(sh, sw))
            s3[lr, lc] = irfft2(np.conj(Fu) * Ft, s=(sh, sw))[:L, :L]
    return float(core.sum()), s2, s3


def ac2_adjoint(x, w2):
    """out[j] = sum_l w2[l] * (x[j+l] + x[j-l]), zero-padded."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n0, n1 = x.shape
    L = w2.shape[0]
    w = np.ascontiguousarray(w2, dtype=np.float64).reshape(-1)
    Xp = _pos_shift_matrix(x, n0, n1, L)
    Xn = _neg_shift_matrix(x, L)
    return (w @ Xp + w @ Xn).reshape(n0, n1)


def _shift_rows_down_right(V, n0, n1, L):
    """Row l of V, viewed as an (n0,n1) field, shifted by +l with zero fill."""
    out = np.zeros_like(V)
    F = V.reshape(L, L, n0, n1)
    O = out.reshape(L, L, n0, n1)
    for lr in range(L):
        for lc in range(L):
            O[lr, lc, lr:, lc:] = F[lr, lc, : n0 - lr, : n1 - lc]
    return out


def ac3_adjoint(x, w3):
    """Adjoint of the third-order sums at x, weighted by w3.

    out[j] = sum_{l1,l2} w3[l1,l2] * ( x[j+l1]x[j+l2]
                                     + x[j-l1]x[j+l2-l1]
                                     + x[j-l2]x[j+l1-l2] ).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n0, n1 = x.shape
    L = w3.shape[0]
    L2 = L * L
    W = np.ascontiguousarray(w3, dtype=np.float64).reshape(L2, L2)
    Xp = _pos_shift_matrix(x, n0, n1, L)
    Xn = _neg_shift_matrix(x, L)
    V1 = W @ Xp   # V1[l1, k] = sum_l2 W[l1,l2] x[k+l2]
    V2 = W.T @ Xp
    term1 = np.einsum("lj,lj->j", Xp, V1)
    term2 = np.einsum("lj,lj->j", Xn, _shift_rows_down_right(V1, n0, n1, L))
    term3 = np.einsum("lj,lj->j", Xn, _shift_rows_down_right(V2, n0, n1, L))
    return (term1 + term2 + term3).reshape(n0, n1)
