import numpy as np
import pytest

from mtdmom.autocorr import (AutocorrSet, autocorr_gradient, autocorr_image,
                             autocorr_measurement, load_autocorr,
                             save_autocorr)
from mtdmom.dataio import FormatError

import oracles


def test_delta_image_values():
    x = np.zeros((2, 2))
    x[0, 0] = 1.0
    acs = autocorr_image(x, 2)
    assert acs.a1 == 0.25
    expect2 = np.zeros((2, 2))
    expect2[0, 0] = 0.25
    assert np.array_equal(acs.a2, expect2)
    expect3 = np.zeros((2, 2, 2, 2))
    expect3[0, 0, 0, 0] = 0.25
    assert np.array_equal(acs.a3, expect3)


def test_all_ones_shift_zero():
    for n in (2, 5):
        acs = autocorr_image(np.ones((n, n)), 1)
        assert acs.a1 == 1.0
        assert acs.a2[0, 0] == 1.0
        assert acs.a3[0, 0, 0, 0] == 1.0


def test_matches_oracle_random_image(backend):
    rng = np.random.default_rng(23)
    z = rng.normal(size=(8, 8))
    acs = autocorr_image(z, 8)
    a1, a2, a3 = oracles.autocorr_shift_loops(z, 8)
    assert abs(acs.a1 - a1) < 1e-12
    assert np.max(np.abs(acs.a2 - a2)) < 1e-12
    assert np.max(np.abs(acs.a3 - a3)) < 1e-12


def test_exchange_symmetry_exact(backend):
    rng = np.random.default_rng(29)
    acs = autocorr_image(rng.normal(size=(7, 7)), 5)
    assert np.array_equal(acs.a3, acs.a3.transpose(2, 3, 0, 1))
    m = autocorr_measurement(rng.normal(size=(40, 40)), 5, tile_rows=16)
    assert np.array_equal(m.a3, m.a3.transpose(2, 3, 0, 1))


def test_scaling_by_constant():
    rng = np.random.default_rng(31)
    z = rng.normal(size=(6, 6))
    base = autocorr_image(z, 4)
    scaled = autocorr_image(3.0 * z, 4)
    assert np.isclose(scaled.a1, 3.0 * base.a1)
    assert np.allclose(scaled.a2, 9.0 * base.a2)
    assert np.allclose(scaled.a3, 27.0 * base.a3)


def test_tiled_equals_monolithic(backend):
    rng = np.random.default_rng(37)
    y = rng.normal(size=(256, 256))
    whole = autocorr_measurement(y, 6, tile_rows=512)
    tiled = autocorr_measurement(y, 6, tile_rows=50)
    scale = max(1.0, np.max(np.abs(whole.a3)))
    assert abs(whole.a1 - tiled.a1) <= 1e-10
    assert np.max(np.abs(whole.a2 - tiled.a2)) <= 1e-10 * scale
    assert np.max(np.abs(whole.a3 - tiled.a3)) <= 1e-10 * scale


def test_submeasurement_weighting():
    # two frames of different sizes: combined result must equal the
    # pixel-count-weighted average, i.e. summed raw sums over summed areas
    rng = np.random.default_rng(41)
    y1 = rng.normal(size=(32, 32))
    y2 = rng.normal(size=(64, 64))
    joint = autocorr_measurement([y1, y2], 4)
    s1 = autocorr_measurement(y1, 4)
    s2 = autocorr_measurement(y2, 4)
    w1, w2 = y1.size, y2.size
    assert np.isclose(joint.a1, (w1 * s1.a1 + w2 * s2.a1) / (w1 + w2))
    assert np.allclose(joint.a3, (w1 * s1.a3 + w2 * s2.a3) / (w1 + w2),
                       atol=1e-14)


def test_pure_noise_second_order():
    rng = np.random.default_rng(43)
    sigma = 1.5
    draws = 60
    L = 3
    acc = np.zeros((L, L))
    for _ in range(draws):
        y = rng.normal(0, sigma, size=(128, 128))
        acc += autocorr_measurement(y, L).a2
    mean = acc / draws
    se = sigma ** 2 / np.sqrt(128 * 128 * draws)
    assert abs(mean[0, 0] - sigma ** 2) < 5 * se * 2
    off = mean.copy()
    off[0, 0] = 0
    assert np.max(np.abs(off)) < 5 * se * 2


def test_gradient_zero_residuals():
    x = np.random.default_rng(47).normal(size=(5, 5))
    w = AutocorrSet(L=5, a1=0.0, a2=np.zeros((5, 5)),
                    a3=np.zeros((5, 5, 5, 5)), norm_area=25.0)
    assert np.array_equal(autocorr_gradient(x, w), np.zeros((5, 5)))


def test_gradient_first_order_only():
    x = np.random.default_rng(53).normal(size=(4, 4))
    w = AutocorrSet(L=4, a1=2.5, a2=np.zeros((4, 4)),
                    a3=np.zeros((4, 4, 4, 4)), norm_area=16.0)
    assert np.allclose(autocorr_gradient(x, w), np.full((4, 4), 2.5 / 16))


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(59)
    acs = autocorr_image(rng.normal(size=(6, 6)), 6)
    path = tmp_path / "moments.mtdac"
    save_autocorr(acs, path)
    back = load_autocorr(path)
    assert back.L == acs.L
    assert back.a1 == acs.a1
    assert np.array_equal(back.a2, acs.a2)
    assert np.array_equal(back.a3, acs.a3)
    # identical rerun produces identical bytes
    path2 = tmp_path / "again.mtdac"
    save_autocorr(acs, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_serialization_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mtdac"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 64)
    with pytest.raises(FormatError):
        load_autocorr(path)
    good = tmp_path / "short.mtdac"
    acs = autocorr_image(np.ones((3, 3)), 3)
    save_autocorr(acs, good)
    good.write_bytes(good.read_bytes()[:40])
    with pytest.raises(FormatError):
        load_autocorr(good)


def test_shape_validation():
    with pytest.raises(ValueError):
        autocorr_image(np.ones((3, 3)), 4)
    with pytest.raises(ValueError):
        autocorr_measurement(np.ones((8, 8)), 5)
    with pytest.raises(ValueError):
        autocorr_measurement(np.ones((32, 32)), 4, tile_rows=2)
