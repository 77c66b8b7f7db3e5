# Compiled autocorrelation kernels: direct shifted-product accumulation.
#
# Same contract as _ackern_py (the pure-NumPy fallback); see that module's
# docstring for the formulas.  All loops run over explicit valid ranges so
# reads never leave the tile (zero-padding semantics by omission).

import numpy as np

cimport numpy as cnp


def frame_sums(double[:, ::1] tile, Py_ssize_t core_h, Py_ssize_t core_w,
               Py_ssize_t L):
    cdef Py_ssize_t H = tile.shape[0]
    cdef Py_ssize_t W = tile.shape[1]
    s2_arr = np.zeros((L, L))
    s3_arr = np.zeros((L, L, L, L))
    u_arr = np.empty((core_h, core_w))
    cdef double[:, ::1] s2 = s2_arr
    cdef double[:, :, :, ::1] s3 = s3_arr
    cdef double[:, ::1] u = u_arr
    cdef double s1 = 0.0
    cdef double acc
    cdef Py_ssize_t i, j, lr1, lc1, lr2, lc2, f1, f2, uh, uw, rh, rw
    cdef Py_ssize_t L2 = L * L

    for i in range(core_h):
        for j in range(core_w):
            s1 += tile[i, j]

    for lr1 in range(L):
        rh = min(core_h, H - lr1)
        for lc1 in range(L):
            rw = min(core_w, W - lc1)
            acc = 0.0
            for i in range(rh):
                for j in range(rw):
                    acc += tile[i, j] * tile[i + lr1, j + lc1]
            s2[lr1, lc1] = acc

    # Third order: for each l1 build u = z * shift(z, l1) once, then sweep
    # the lexicographic suffix of l2 and mirror (exchange symmetry).
    for f1 in range(L2):
        lr1 = f1 // L
        lc1 = f1 % L
        uh = min(core_h, H - lr1)
        uw = min(core_w, W - lc1)
        if uh < 0:
            uh = 0
        if uw < 0:
            uw = 0
        for i in range(uh):
            for j in range(uw):
                u[i, j] = tile[i, j] * tile[i + lr1, j + lc1]
        for f2 in range(f1, L2):
            lr2 = f2 // L
            lc2 = f2 % L
            rh = min(uh, H - lr2)
            rw = min(uw, W - lc2)
            acc = 0.0
            for i in range(rh):
                for j in range(rw):
                    acc += u[i, j] * tile[i + lr2, j + lc2]
            s3[lr1, lc1, lr2, lc2] = acc
            if f2 != f1:
                s3[lr2, lc2, lr1, lc1] = acc

    return s1, s2_arr, s3_arr


def ac2_adjoint(double[:, ::1] x, double[:, ::1] w2):
    cdef Py_ssize_t n0 = x.shape[0]
    cdef Py_ssize_t n1 = x.shape[1]
    cdef Py_ssize_t L = w2.shape[0]
    out_arr = np.zeros((n0, n1))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t lr, lc, i, j
    cdef double w
    for lr in range(L):
        for lc in range(L):
            w = w2[lr, lc]
            for i in range(n0 - lr):
                for j in range(n1 - lc):
                    out[i, j] += w * x[i + lr, j + lc]
            for i in range(n0 - lr):
                for j in range(n1 - lc):
                    out[i + lr, j + lc] += w * x[i, j]
    return out_arr


def ac3_adjoint(double[:, ::1] x, double[:, :, :, ::1] w3):
    cdef Py_ssize_t n0 = x.shape[0]
    cdef Py_ssize_t n1 = x.shape[1]
    cdef Py_ssize_t L = w3.shape[0]
    out_arr = np.zeros((n0, n1))
    v1_arr = np.zeros((L, L, n0, n1))
    v2_arr = np.zeros((L, L, n0, n1))
    cdef double[:, ::1] out = out_arr
    cdef double[:, :, :, ::1] v1 = v1_arr
    cdef double[:, :, :, ::1] v2 = v2_arr
    cdef Py_ssize_t lr1, lc1, lr2, lc2, i, j
    cdef double w

    # v1[l1, k] = sum_l2 w3[l1,l2] x[k+l2]; v2[l2, k] = sum_l1 w3[l1,l2] x[k+l1]
    for lr1 in range(L):
        for lc1 in range(L):
            for lr2 in range(L):
                for lc2 in range(L):
                    w = w3[lr1, lc1, lr2, lc2]
                    for i in range(n0 - lr2):
                        for j in range(n1 - lc2):
                            v1[lr1, lc1, i, j] += w * x[i + lr2, j + lc2]
                    for i in range(n0 - lr1):
                        for j in range(n1 - lc1):
                            v2[lr2, lc2, i, j] += w * x[i + lr1, j + lc1]

    # term1: out[j] += x[j+l1] v1[l1, j]
    # term2: out[k+l1] += x[k] v1[l1, k]   (j = k + l1)
    # term3: out[k+l2] += x[k] v2[l2, k]
    for lr1 in range(L):
        for lc1 in range(L):
            for i in range(n0 - lr1):
                for j in range(n1 - lc1):
                    out[i, j] += x[i + lr1, j + lc1] * v1[lr1, lc1, i, j]
                    out[i + lr1, j + lc1] += x[i, j] * (
                        v1[lr1, lc1, i, j] + v2[lr1, lc1, i, j])
    return out_arr
