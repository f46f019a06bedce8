"""Positive-orthant Gaussian sampling: half-normal, univariate, multivariate."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from csunmix.rng import make_rng
from csunmix.truncgauss import (
    OrthantGaussian,
    orthant_gibbs_sweeps,
    sample_halfnormal,
    sample_orthant_gaussian,
    sample_univariate_truncnorm,
)


# -------------------------------------------------------------- half-normal

def test_halfnormal_moments():
    rng = make_rng(0)
    x = sample_halfnormal(rng, 1.0, size=200_000)
    assert np.all(x >= 0)
    assert abs(x.mean() - np.sqrt(2 / np.pi)) < 0.005
    assert abs(x.var() - (1 - 2 / np.pi)) < 0.005


def test_halfnormal_scale_and_shapes():
    rng = make_rng(1)
    assert isinstance(sample_halfnormal(rng, 2.0), float)
    x = sample_halfnormal(rng, np.array([0.5, 2.0]), size=(1000, 2))
    assert x.shape == (1000, 2)
    # column means scale linearly with the scale parameter
    ratio = x[:, 1].mean() / x[:, 0].mean()
    assert abs(ratio - 4.0) < 0.5


def test_halfnormal_rejects_bad_scale():
    rng = make_rng(0)
    with pytest.raises(ValueError):
        sample_halfnormal(rng, 0.0)
    with pytest.raises(ValueError):
        sample_halfnormal(rng, -1.0)
    with pytest.raises(ValueError):
        sample_halfnormal(rng, np.nan)


# -------------------------------------------------- univariate truncated

@pytest.mark.parametrize(
    "mean,sd,lower",
    [
        (0.0, 1.0, 0.0),     # standardised bound a = 0 (bulk regime)
        (1.0, 0.5, 0.0),     # a = -2, almost no truncation
        (0.2, 1.0, 0.6),     # a = 0.4, just below the regime switch
        (-3.0, 1.0, 0.0),    # a = 3, tail regime
        (-2.0, 0.25, 0.0),   # a = 8, deep tail
        (5.0, 2.0, 3.0),     # shifted lower bound
    ],
)
def test_univariate_truncnorm_matches_scipy(mean, sd, lower):
    rng = make_rng(42)
    n = 20_000
    x = sample_univariate_truncnorm(rng, np.full(n, mean), sd, lower)
    assert np.all(x > lower)
    a = (lower - mean) / sd
    ks = stats.kstest(x, stats.truncnorm(a, np.inf, loc=mean, scale=sd).cdf)
    assert ks.pvalue > 0.01, (mean, sd, lower, ks)


def test_univariate_truncnorm_extreme_tail_moments():
    # a = 30: rejection from the untruncated normal would never finish,
    # so this exercises the shifted-exponential branch specifically.
    rng = make_rng(7)
    x = sample_univariate_truncnorm(rng, 0.0, 1.0, np.full(100_000, 30.0))
    assert np.all(x > 30.0)
    # E[Z | Z > a] = pdf(a)/sf(a); for a = 30 this is a + 1/a to ~1e-3
    want = stats.norm.pdf(30.0) / stats.norm.sf(30.0)
    assert abs(x.mean() - want) < 5e-4


def test_univariate_truncnorm_scalar_and_broadcast():
    rng = make_rng(3)
    out = sample_univariate_truncnorm(rng, 0.3, 0.2)
    assert isinstance(out, float) and out > 0
    means = np.array([[0.1], [5.0]])
    sds = np.array([0.5, 2.0])
    x = sample_univariate_truncnorm(rng, means, sds, 0.0)
    assert x.shape == (2, 2)
    assert np.all(x > 0)


def test_univariate_truncnorm_validation():
    rng = make_rng(0)
    with pytest.raises(ValueError):
        sample_univariate_truncnorm(rng, 0.0, 0.0)
    with pytest.raises(ValueError):
        sample_univariate_truncnorm(rng, np.inf, 1.0)
    with pytest.raises(ValueError):
        sample_univariate_truncnorm(rng, 0.0, 1.0, np.nan)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-4.0, 4.0),
    st.floats(0.05, 3.0),
    st.floats(-2.0, 2.0),
    st.integers(0, 2**31),
)
def test_univariate_truncnorm_respects_bound_property(mean, sd, lower, seed):
    x = sample_univariate_truncnorm(make_rng(seed), np.full(64, mean), sd, lower)
    assert np.all(x > lower)


# ------------------------------------------------------- orthant Gaussian

def test_orthant_gaussian_validation():
    OrthantGaussian(np.array([0.1, 0.2]), np.eye(2))
    with pytest.raises(ValueError):
        OrthantGaussian(np.array([[0.1, 0.2]]), np.eye(2))  # not a vector
    with pytest.raises(ValueError):
        OrthantGaussian(np.array([0.1, 0.2]), np.eye(3))  # size mismatch
    with pytest.raises(ValueError):
        OrthantGaussian(np.zeros(2), np.array([[1.0, 0.9], [0.2, 1.0]]))  # asymmetric
    with pytest.raises(ValueError):
        OrthantGaussian(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))  # indefinite
    with pytest.raises(ValueError):
        OrthantGaussian(np.array([np.nan, 0.0]), np.eye(2))


def test_orthant_gaussian_precision_inverts_cov():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3))
    cov = a @ a.T + 3 * np.eye(3)
    g = OrthantGaussian(rng.normal(size=3), cov)
    prec, pot = g.precision()
    assert np.allclose(prec @ cov, np.eye(3), atol=1e-10)
    assert np.allclose(pot, prec @ g.mean)


def test_orthant_gibbs_means_match_quadrature():
    mean = np.array([0.3, -0.2])
    cov = np.array([[1.0, 0.6], [0.6, 1.0]])
    g = OrthantGaussian(mean, cov)
    want, _ = oracles.orthant_moments_quad(mean, cov)
    rng = make_rng(5)
    prec, pot = g.precision()
    n_b = 20_000
    x = np.full((n_b, 2), 0.7)
    orthant_gibbs_sweeps(rng, np.broadcast_to(prec, (n_b, 2, 2)), np.broadcast_to(pot, (n_b, 2)), x, sweeps=30)
    acc = np.zeros(2)
    for _ in range(20):
        orthant_gibbs_sweeps(rng, np.broadcast_to(prec, (n_b, 2, 2)), np.broadcast_to(pot, (n_b, 2)), x, sweeps=1)
        acc += x.mean(axis=0)
    assert np.abs(acc / 20 - want).max() < 0.01


def test_orthant_gibbs_independent_case_matches_truncnorm():
    # diagonal covariance: coordinates are independent univariate
    # truncated normals whose means scipy knows in closed form
    mean = np.array([0.5, -1.0, 2.0])
    sd = np.array([1.0, 0.7, 0.4])
    g = OrthantGaussian(mean, np.diag(sd**2))
    prec, pot = g.precision()
    n_b = 50_000
    x = np.ones((n_b, 3))
    rng = make_rng(9)
    orthant_gibbs_sweeps(rng, np.broadcast_to(prec, (n_b, 3, 3)), np.broadcast_to(pot, (n_b, 3)), x, sweeps=5)
    want = np.array(
        [stats.truncnorm(-m / s, np.inf, loc=m, scale=s).mean() for m, s in zip(mean, sd)]
    )
    assert np.abs(x.mean(axis=0) - want).max() < 0.01


def test_orthant_gibbs_inplace_and_shape_checks():
    rng = make_rng(0)
    prec = np.eye(2)[None].repeat(3, axis=0)
    pot = np.zeros((3, 2))
    x = np.ones((3, 2))
    out = orthant_gibbs_sweeps(rng, prec, pot, x, sweeps=1)
    assert out is x
    assert np.all(x > 0)
    with pytest.raises(ValueError):
        orthant_gibbs_sweeps(rng, prec, pot, np.ones(2))
    with pytest.raises(ValueError):
        orthant_gibbs_sweeps(rng, prec[:2], pot, np.ones((3, 2)))


def test_sample_orthant_gaussian_single_draw():
    g = OrthantGaussian(np.array([0.4, 0.1]), np.array([[0.2, 0.05], [0.05, 0.3]]))
    x = sample_orthant_gaussian(make_rng(1), g, sweeps=3)
    assert x.shape == (2,)
    assert np.all(x > 0)
    # deterministic under the same seed
    assert np.array_equal(x, sample_orthant_gaussian(make_rng(1), g, sweeps=3))
    with pytest.raises(ValueError):
        sample_orthant_gaussian(make_rng(0), g, initial=np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        sample_orthant_gaussian(make_rng(0), g, initial=np.ones(3))
