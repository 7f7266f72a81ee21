import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from rlmh.errors import DimensionMismatch, NotSpd, NotSymmetric
from rlmh.numkit import (
    RngStream,
    cholesky,
    mvn_logpdf,
    mvn_sample,
    spd_inverse,
    spd_logdet,
    spd_solve,
)


def random_spd(seed, d):
    a = np.random.default_rng(seed).normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def test_cholesky_identity_and_diagonal():
    assert np.array_equal(cholesky(np.eye(3)).lower, np.eye(3))
    assert np.allclose(cholesky(np.diag([4.0, 9.0])).lower, np.diag([2.0, 3.0]))


def test_cholesky_rejects_non_pd_and_asymmetric():
    with pytest.raises(NotSpd):
        cholesky(np.array([[1.0, 1.5], [1.5, 1.0]]))
    with pytest.raises(NotSymmetric):
        cholesky(np.array([[2.0, 0.1], [0.0, 2.0]]))


def test_solve_examples():
    v = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(spd_solve(cholesky(np.eye(3)), v), v)
    assert np.allclose(spd_solve(cholesky(np.array([[4.0]])), [8.0]), [2.0])
    with pytest.raises(DimensionMismatch):
        spd_solve(cholesky(np.eye(2)), np.ones(3))


def test_logdet_examples():
    assert spd_logdet(cholesky(np.eye(4))) == 0.0
    assert spd_logdet(cholesky(np.diag([4.0, 9.0]))) == pytest.approx(math.log(36.0), abs=1e-12)
    assert spd_logdet(cholesky(3.0 * np.eye(2))) == pytest.approx(2 * math.log(3.0), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_factor_reconstructs_and_solves(seed, d):
    m = random_spd(seed, d)
    f = cholesky(m)
    assert np.allclose(f.lower @ f.lower.T, m, rtol=1e-12, atol=1e-10)
    assert np.allclose(f.matrix(), m, rtol=1e-12, atol=1e-10)
    v = np.random.default_rng(seed + 1).normal(size=d)
    assert np.allclose(m @ spd_solve(f, v), v, atol=1e-9)
    assert np.allclose(spd_inverse(f) @ m, np.eye(d), atol=1e-9)
    assert spd_logdet(f) == pytest.approx(np.linalg.slogdet(m)[1], rel=1e-10, abs=1e-10)


def test_mvn_zero_noise_draw_is_the_mean(rng):
    m = np.array([1.0, -2.0])
    assert np.array_equal(mvn_sample(m, cholesky(np.eye(2)), rng, z=np.zeros(2)), m)


def test_mvn_sample_moments():
    rng = RngStream(7)
    f = cholesky(np.diag([1.0, 4.0]))
    xs = np.array([mvn_sample(np.zeros(2), f, rng) for _ in range(100_000)])
    se = np.sqrt(np.array([1.0, 4.0]) / len(xs))
    assert np.all(np.abs(xs.mean(axis=0)) < 3 * se)
    cov = np.cov(xs.T)
    assert np.allclose(np.diag(cov), [1.0, 4.0], rtol=0.05)


def test_mvn_logpdf_examples():
    f = cholesky(np.eye(2))
    assert mvn_logpdf(np.zeros(2), np.zeros(2), f) == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    g = cholesky(cov)
    mean = np.array([0.5, -1.0])
    offsets = np.linspace(-1, 1, 9)
    at_mean = mvn_logpdf(mean, mean, g)
    assert all(mvn_logpdf(mean + [a, b], mean, g) <= at_mean for a in offsets for b in offsets)
    x, c = np.array([0.2, 0.7]), np.array([3.0, -4.0])
    assert mvn_logpdf(x + c, mean + c, g) == pytest.approx(mvn_logpdf(x, mean, g), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_mvn_logpdf_matches_scipy(seed, d):
    cov = random_spd(seed, d)
    r = np.random.default_rng(seed)
    x, mean = r.normal(size=d), r.normal(size=d)
    ref = multivariate_normal(mean, cov).logpdf(x)
    assert mvn_logpdf(x, mean, cholesky(cov)) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_rng_streams_reproducible_and_disjoint():
    a, b = RngStream(5, 0), RngStream(5, 0)
    assert np.array_equal(a.normal(10), b.normal(10))
    c, d = RngStream(5, 1), RngStream(5, 0).spawn(1)
    assert not np.array_equal(c.normal(10), RngStream(5, 0).normal(10))
    assert not np.array_equal(d.normal(10), RngStream(5, 1).normal(10))
    assert np.array_equal(RngStream(5, 0).spawn(1).normal(5), RngStream(5, 0).spawn(1).normal(5))
