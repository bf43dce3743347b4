import math

import numpy as np
import pytest
from scipy import integrate, stats

from wls_lab.hermite import TensorBasis, eval_univariate, gauss_hermite_nodes, gaussian_density
from wls_lab.multiindex import IndexSet, MultiIndex
from wls_lab.sampling import SamplingMeasure, UnivariateSampler, univariate_sampler
from wls_lab.weights import build_lambda, build_rho

Z = MultiIndex.zero()


def quad_cdf(k, T=14.0, cells=8000):
    """Independent CDF of H_k^2 g: adaptive quadrature on a fine grid,
    cumulated and linearly interpolated (interpolation error below 1e-6)."""
    dens = lambda t: eval_univariate(k, t) ** 2 * gaussian_density(t)
    grid = np.linspace(0.0, T, cells + 1)
    pieces = [integrate.quad(dens, a, b, epsabs=1e-14)[0] for a, b in zip(grid[:-1], grid[1:])]
    half = np.concatenate(([0.0], np.cumsum(pieces)))

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return 0.5 + np.sign(x) * np.interp(np.abs(x), grid, half, right=0.5)
    return cdf


def test_weight_examples():
    s0 = SamplingMeasure(IndexSet([Z]), J=3)
    assert s0.weight(np.array([0.3, -2.0, 5.0])) == 1.0
    s1 = SamplingMeasure(IndexSet([Z, MultiIndex.unit(1)]), J=1)
    assert s1.weight(np.array([0.0])) == 2.0
    t = 1.7
    assert s1.weight(np.array([t])) == pytest.approx(2 / (1 + t * t), rel=1e-15)


def test_weight_bounds():
    rho = build_rho(0.5, 3)
    s = build_lambda(40, rho)
    meas = SamplingMeasure(s, J=15)
    Y, w = meas.sample(5000, seed=3)
    assert np.all(w > 0) and np.all(w <= len(s))
    Y = np.random.default_rng(0).standard_normal((2000, 15)) * 5
    w = meas.weight(Y)
    assert np.all(w > 0) and np.all(w <= len(s))


@pytest.mark.parametrize("k", [0, 1, 2, 3, 7])
def test_median_is_zero(k):
    assert abs(univariate_sampler(k).quantile(0.5)) < 1e-6


def test_k0_is_standard_normal():
    smp = univariate_sampler(0)
    u = np.array([0.01, 0.2, 0.7, 0.975])
    np.testing.assert_allclose(smp.quantile(u), stats.norm.ppf(u), atol=1e-6)


def test_k1_quantile_against_closed_form():
    # int_{-inf}^x t^2 g(t) dt = Phi(x) - x g(x)
    from scipy.optimize import brentq
    root = brentq(lambda x: stats.norm.cdf(x) - x * stats.norm.pdf(x) - 0.975, 0, 10, xtol=1e-14)
    assert univariate_sampler(1).quantile(0.975) == pytest.approx(root, abs=1e-5)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 6])
def test_tabulated_cdf_accuracy(k):
    smp = univariate_sampler(k)
    # grid nodes of the oracle, where it carries no interpolation error
    x = np.linspace(-14.0, 14.0, 801)
    assert np.max(np.abs(smp.cdf(x) - quad_cdf(k)(x))) < 1e-8
    assert smp.mass_error < 1e-10


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_sampler_ks_and_second_moment(k):
    rng = np.random.default_rng(100 + k)
    draws = univariate_sampler(k).quantile(rng.random(100_000))
    assert stats.kstest(draws, quad_cdf(k)).pvalue > 0.01
    x, wq = gauss_hermite_nodes(40)
    oracle = np.sum(wq * x**2 * eval_univariate(k, x) ** 2)
    assert oracle == pytest.approx(2 * k + 1, rel=1e-12)
    sq = draws**2
    assert abs(sq.mean() - oracle) < 3 * sq.std(ddof=1) / math.sqrt(sq.size)


def test_moment_helper():
    assert univariate_sampler(2).moment(2) == pytest.approx(5.0, rel=1e-6)
    assert univariate_sampler(2).moment(3) == 0.0


def test_zero_set_draws_standard_normal():
    meas = SamplingMeasure(IndexSet([Z]), J=2)
    Y, w = meas.sample(10_000, seed=11)
    assert np.all(w == 1.0)
    for col in Y.T:
        assert stats.kstest(col, "norm").pvalue > 0.01


def test_mixture_component_moments():
    # with Lambda = {0, e_1, 2e_1} the first coordinate follows (g + t^2 g + H_2^2 g)/3
    s = IndexSet([Z, MultiIndex.unit(1), MultiIndex.unit(1, 2)])
    meas = SamplingMeasure(s, J=2)
    Y, _ = meas.sample(100_000, seed=12)
    sq = Y[:, 0] ** 2
    assert abs(sq.mean() - 3.0) < 3 * sq.std(ddof=1) / math.sqrt(sq.size)


def test_weight_integrates_to_one():
    s = build_lambda(12, build_rho(0.5, 2))
    meas = SamplingMeasure(s, J=7)
    _, w = meas.sample(100_000, seed=13)
    assert abs(w.mean() - 1.0) < 3 * w.std(ddof=1) / math.sqrt(w.size)


def test_gram_is_unbiased():
    s = build_lambda(20, build_rho(0.5, 3))
    meas = SamplingMeasure(s, J=15)
    m = 100_000
    G = np.zeros((20, 20))
    G2 = np.zeros((20, 20))
    for _, w, B in meas.blocks(m, seed=14):
        P = (B[:, None, :] * B[None, :, :]) * w
        G += P.sum(axis=-1)
        G2 += np.einsum("ijk,ijk->ij", P, P)
    mean = G / m
    se = np.sqrt((G2 / m - mean**2) / m)
    assert np.all(np.abs(mean - np.eye(20)) < 4 * se)


def test_determinism_and_block_independence():
    s = build_lambda(30, build_rho(0.5, 3))
    meas = SamplingMeasure(s, J=15)
    Y1, w1 = meas.sample(3000, seed=7)
    Y2, w2 = meas.sample(3000, seed=np.random.SeedSequence(7))
    np.testing.assert_array_equal(Y1, Y2)
    np.testing.assert_array_equal(w1, w2)
    # complete blocks do not depend on the total sample count
    Y3, _ = meas.sample(5000, seed=7)
    np.testing.assert_array_equal(Y3[:2048], Y1[:2048])
    Y4, _ = meas.sample(3000, seed=8)
    assert not np.array_equal(Y4, Y1)


def test_draw_matches_weight():
    s = build_lambda(10, build_rho(0.5, 1))
    meas = SamplingMeasure(s, J=3)
    y, w = meas.draw(np.random.default_rng(0))
    assert y.shape == (3,)
    basis = TensorBasis(s, 3).evaluate(y[None, :])[:, 0]
    assert w == pytest.approx(len(s) / np.sum(basis**2), rel=1e-14)


def test_rejects_sets_beyond_J():
    with pytest.raises(ValueError):
        SamplingMeasure(IndexSet([Z, MultiIndex.unit(1), MultiIndex.unit(2)]), J=1)
    with pytest.raises(ValueError):
        UnivariateSampler(-1)
