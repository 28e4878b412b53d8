import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afgan.spectrum import (
    dft2d,
    energy_scores,
    fingerprint_energy_score,
    log_magnitude_spectrum,
    radial_profile,
    spectra_batch,
)

import oracles

sides = st.integers(2, 12)


def test_dft_matches_direct_sum():
    x = np.random.default_rng(0).standard_normal((6, 6))
    np.testing.assert_allclose(dft2d(x), oracles.dft2d_direct(x), atol=1e-9)


def test_dft_small_examples():
    np.testing.assert_allclose(dft2d(np.ones((2, 2))), [[4, 0], [0, 0]], atol=1e-12)
    imp = np.zeros((5, 5))
    imp[0, 0] = 1
    np.testing.assert_allclose(np.abs(dft2d(imp)), np.ones((5, 5)))
    np.testing.assert_allclose(dft2d(np.array([[1.0, -1.0], [-1.0, 1.0]])), [[0, 0], [0, 4]], atol=1e-12)


def test_dft_rejects_bad_shapes():
    with pytest.raises(ValueError, match="square"):
        dft2d(np.zeros((3, 4)))
    with pytest.raises(ValueError, match=">= 2"):
        dft2d(np.zeros((1, 1)))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**31))
def test_parseval(side, seed):
    x = np.random.default_rng(seed).standard_normal((side, side))
    lhs = (x**2).sum()
    rhs = (np.abs(dft2d(x)) ** 2).sum() / side**2
    assert abs(lhs - rhs) <= 1e-4 * lhs


@settings(max_examples=60, deadline=None)
@given(sides, st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**31))
def test_linearity(side, a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, side, side))
    np.testing.assert_allclose(dft2d(a * x + b * y), a * dft2d(x) + b * dft2d(y), atol=1e-5 * side * side)


@settings(max_examples=60, deadline=None)
@given(sides, st.integers(0, 2**31))
def test_conjugate_symmetry(side, seed):
    f = dft2d(np.random.default_rng(seed).standard_normal((side, side)))
    k = (-np.arange(side)) % side
    np.testing.assert_allclose(f, np.conj(f[np.ix_(k, k)]), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(sides, st.integers(0, 20), st.integers(0, 20), st.integers(0, 2**31))
def test_translation_keeps_magnitude(side, dy, dx, seed):
    x = np.random.default_rng(seed).standard_normal((side, side))
    moved = np.roll(x, (dy, dx), axis=(0, 1))
    np.testing.assert_allclose(np.abs(dft2d(moved)), np.abs(dft2d(x)), atol=1e-5 * side)


def test_constant_image_has_single_bright_center():
    spec = log_magnitude_spectrum(np.full((8, 8, 3), 0.4))
    expected = np.zeros((8, 8))
    expected[4, 4] = 1.0
    for c in range(3):
        np.testing.assert_array_equal(spec.data[:, :, c], expected)
    np.testing.assert_array_equal(radial_profile(spec), [1.0, 0, 0, 0])
    assert fingerprint_energy_score(spec) == 0.0


def test_zero_image_maps_to_zeros():
    spec = log_magnitude_spectrum(np.zeros((4, 4)))
    assert (spec.data == 0).all()
    assert fingerprint_energy_score(spec) == 0.0


def test_checkerboard_scores_one():
    yy, xx = np.mgrid[0:16, 0:16]
    board = ((yy + xx) % 2).astype(float)
    spec = log_magnitude_spectrum(board - 0.5)
    assert fingerprint_energy_score(spec) == pytest.approx(1.0)


def test_channels_are_kept_apart():
    rng = np.random.default_rng(1)
    img = rng.random((8, 8, 3))
    spec = log_magnitude_spectrum(img)
    for c in range(3):
        np.testing.assert_allclose(spec.data[:, :, c], log_magnitude_spectrum(img[:, :, c]).data[:, :, 0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 32), st.integers(0, 2**31))
def test_spectrum_range_and_center(side, seed):
    img = np.random.default_rng(seed).random((side, side, 2))
    spec = log_magnitude_spectrum(img)
    assert np.isfinite(spec.data).all()
    assert spec.data.min() >= 0 and spec.data.max() <= 1
    # DC of a positive image is its largest bin and sits at the center cell
    assert (spec.data[side // 2, side // 2] == 1.0).all()


def test_white_noise_has_no_dominant_bin():
    # min-max scaling pins the top bin to exactly 1, so a literal "no bin above
    # 0.9" can never hold; what must hold is that the top is shared by many
    # bins rather than carried by one spike (DC included)
    ok = 0
    for seed in range(1000):
        noise = np.random.default_rng(seed).standard_normal((64, 64))
        s = log_magnitude_spectrum(noise).data[:, :, 0]
        ok += (s > 0.9).sum() >= 10 and np.sort(s.ravel())[-2] > 0.9
    assert ok >= 990


def test_batch_matches_single_image():
    imgs = np.random.default_rng(2).random((3, 16, 16, 3))
    batch = spectra_batch(imgs)
    for i in range(3):
        np.testing.assert_allclose(batch[i], log_magnitude_spectrum(imgs[i]).data, atol=1e-6)
        assert energy_scores(imgs)[i] == pytest.approx(fingerprint_energy_score(log_magnitude_spectrum(imgs[i])))


def test_profile_length_and_rotation_invariance():
    img = np.random.default_rng(3).random((64, 64, 3))
    prof = radial_profile(log_magnitude_spectrum(img))
    assert prof.shape == (32,)
    for k in (1, 2, 3):
        rot = radial_profile(log_magnitude_spectrum(np.rot90(img, k)))
        np.testing.assert_allclose(rot, prof, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 24), st.integers(0, 2**31))
def test_energy_score_in_unit_interval(side, seed):
    img = np.random.default_rng(seed).random((side, side, 3))
    assert 0.0 <= fingerprint_energy_score(log_magnitude_spectrum(img)) <= 1.0
