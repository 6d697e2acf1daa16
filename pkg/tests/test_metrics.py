import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polaradmit.errors import DegenerateBaseline, DimensionMismatch, EmptyImage, TooFewSamples
from polaradmit.metrics import (FEATURE_DIM, ApPair, GaussianStats, dataset_features, error_rate,
                                fit_stats, frechet_distance, toy_features)
from polaradmit.synth import SynthSpec, synth_dataset


def _g(mu, var):
    return GaussianStats(np.array([float(mu)]), np.array([[float(var)]]))


def _random_stats(rng, d, n=None):
    m = rng.normal(size=(d, d))
    return GaussianStats(rng.normal(size=d), m @ m.T / d)


def test_fit_stats_examples():
    s = fit_stats([[0, 0], [2, 0]])
    np.testing.assert_array_equal(s.mean, [1, 0])
    np.testing.assert_array_equal(s.cov, [[2, 0], [0, 0]])
    assert np.all(fit_stats(np.tile([1.0, 2.0, 3.0], (5, 1))).cov == 0)
    with pytest.raises(TooFewSamples):
        fit_stats([[1.0, 2.0]])


@pytest.mark.parametrize("a, b, fd", [((0, 1), (1, 1), 1.0), ((0, 4), (0, 1), 1.0), ((3, 2), (3, 2), 0.0)])
def test_fd_1d_examples(a, b, fd):
    assert frechet_distance(_g(*a), _g(*b)) == pytest.approx(fd, abs=1e-12)


@given(st.floats(-100, 100), st.floats(0, 50), st.floats(-100, 100), st.floats(0, 50))
def test_fd_1d_closed_form(mu_a, sd_a, mu_b, sd_b):
    fd = frechet_distance(_g(mu_a, sd_a ** 2), _g(mu_b, sd_b ** 2))
    assert fd == pytest.approx((mu_a - mu_b) ** 2 + (sd_a - sd_b) ** 2, abs=1e-9, rel=1e-9)


def test_fd_identity_and_symmetry(rng):
    for d in (1, 3, 8, 64):
        a, b = _random_stats(rng, d), _random_stats(rng, d)
        assert frechet_distance(a, a) == pytest.approx(0.0, abs=1e-9)
        assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-9)


def test_fd_rotation_invariance(rng):
    a, b = _random_stats(rng, 8), _random_stats(rng, 8)
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    rot = lambda s: GaussianStats(q @ s.mean, q @ s.cov @ q.T)
    assert frechet_distance(rot(a), rot(b)) == pytest.approx(frechet_distance(a, b), rel=1e-6)


def test_fd_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        frechet_distance(_random_stats(rng, 2), _random_stats(rng, 3))


def test_toy_features_deterministic():
    img = synth_dataset(SynthSpec(12, 12, seed=1), 1)[0]
    f = toy_features(img, seed=0)
    assert f.shape == (FEATURE_DIM,)
    assert f.tobytes() == toy_features(img, seed=0).tobytes()
    assert not np.array_equal(f, toy_features(img, seed=1))
    with pytest.raises(EmptyImage):
        toy_features(np.zeros((0, 4, 4)))


def test_self_distance_of_shuffled_set(rng):
    imgs = synth_dataset(SynthSpec(8, 8, seed=2), 40)
    f = dataset_features(imgs)
    shuffled = f[rng.permutation(len(f))]
    assert frechet_distance(fit_stats(f), fit_stats(shuffled)) == pytest.approx(0.0, abs=1e-9)
    # a genuinely different set is farther away
    other = dataset_features(synth_dataset(SynthSpec(8, 8, intensity_range=(150, 250), seed=3), 40))
    assert frechet_distance(fit_stats(f), fit_stats(other)) > 1e-3


@pytest.mark.parametrize("rgb, polar, er", [(0.663, 0.704, -0.1217), (0.785, 0.794, -0.0419)])
def test_error_rate_examples(rgb, polar, er):
    assert error_rate(rgb, polar) == pytest.approx(er, abs=5e-5)
    assert error_rate(ApPair(rgb, polar)) == error_rate(rgb, polar)


def test_error_rate_edges():
    assert error_rate(0.5, 0.5) == 0.0
    with pytest.raises(DegenerateBaseline):
        error_rate(1.0, 0.9)
    with pytest.raises(ValueError):
        ApPair(1.2, 0.5)


@given(st.integers(0, 999), st.integers(0, 1000))
def test_error_rate_sign(rgb, polar):
    rgb, polar = rgb / 1000, polar / 1000
    er = error_rate(rgb, polar)
    assert (polar > rgb) == (er < 0)
