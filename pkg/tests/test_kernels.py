import numpy as np
import pytest

from mtdmom import kernels

import oracles


def test_backends_listed():
    names = kernels.available_backends()
    assert "pure" in names
    assert kernels.BACKEND in names


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.get_impl("vectorized")


def test_shift_loop_oracle_matches_scalar_oracle():
    rng = np.random.default_rng(7)
    for n, L in [(3, 3), (4, 4), (5, 3)]:
        z = rng.normal(size=(n, n))
        ref = oracles.autocorr_scalar(z, L)
        got = oracles.autocorr_shift_loops(z, L)
        assert abs(ref[0] - got[0]) < 1e-12
        assert np.max(np.abs(ref[1] - got[1])) < 1e-12
        assert np.max(np.abs(ref[2] - got[2])) < 1e-12


def test_frame_sums_matches_oracle(backend):
    rng = np.random.default_rng(11)
    for n in (3, 5, 8):
        z = rng.normal(size=(n, n))
        a1, a2, a3 = oracles.autocorr_shift_loops(z, n)
        s1, s2, s3 = kernels.frame_sums(z, n, n, n)
        area = z.size
        assert abs(s1 / area - a1) < 1e-12
        assert np.max(np.abs(s2 / area - a2)) < 1e-12
        assert np.max(np.abs(s3 / area - a3)) < 1e-11


def test_frame_sums_halo_reads(backend):
    # a frame split into core plus halo must reproduce the same products
    # as summing the full frame restricted to core start positions
    rng = np.random.default_rng(3)
    L = 4
    frame = rng.normal(size=(12, 10))
    core_h, core_w = 9, 7
    s1, s2, s3 = kernels.frame_sums(frame, core_h, core_w, L)

    def at(i, j):
        H, W = frame.shape
        return frame[i, j] if 0 <= i < H and 0 <= j < W else 0.0

    ref2 = np.zeros((L, L))
    for p in range(L):
        for q in range(L):
            ref2[p, q] = sum(at(i, j) * at(i + p, j + q)
                             for i in range(core_h) for j in range(core_w))
    assert np.max(np.abs(s2 - ref2)) < 1e-12


def test_large_frame_backends_agree():
    rng = np.random.default_rng(5)
    frame = rng.normal(size=(300, 300)) * (rng.random((300, 300)) < 0.05)
    results = {}
    for name in kernels.available_backends():
        impl = kernels.get_impl(name)
        results[name] = kernels.frame_sums(frame, 300, 300, 6, impl=impl)
    if len(results) < 2:
        pytest.skip("single backend built")
    base = results["pure"]
    other = results["compiled"]
    assert abs(base[0] - other[0]) < 1e-9
    assert np.max(np.abs(base[1] - other[1])) < 1e-9
    assert np.max(np.abs(base[2] - other[2])) < 1e-9


def test_ac2_adjoint_is_gradient(backend):
    rng = np.random.default_rng(13)
    x = rng.normal(size=(6, 6))
    w2 = rng.normal(size=(4, 4))

    def total(z):
        _, s2, _ = kernels.frame_sums(z, 6, 6, 4)
        return float(np.sum(w2 * s2))

    g = kernels.ac2_adjoint(x, w2)
    num = oracles.finite_difference_gradient(total, x, h=1e-6)
    assert np.max(np.abs(g - num)) < 1e-7


def test_ac3_adjoint_is_gradient(backend):
    rng = np.random.default_rng(17)
    x = rng.normal(size=(5, 5))
    w3 = rng.normal(size=(3, 3, 3, 3))
    w3 = w3 + np.transpose(w3, (2, 3, 0, 1))

    def total(z):
        _, _, s3 = kernels.frame_sums(z, 5, 5, 3)
        return float(np.sum(w3 * s3))

    g = kernels.ac3_adjoint(x, w3)
    num = oracles.finite_difference_gradient(total, x, h=1e-6)
    assert np.max(np.abs(g - num)) < 1e-6


def test_shift_range_validation(backend):
    z = np.zeros((4, 4))
    with pytest.raises(ValueError):
        kernels.frame_sums(z, 5, 4, 2)
    with pytest.raises(ValueError):
        kernels.frame_sums(z, 4, 4, 0)
    with pytest.raises(ValueError):
        kernels.ac2_adjoint(z, np.zeros((5, 5)))
