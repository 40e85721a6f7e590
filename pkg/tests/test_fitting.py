"""Nataf sampling, histogram inverse CDF, EM fitting and mixture sampling."""

import math

import numpy as np
import pytest
from scipy.stats import ks_2samp, norm, spearmanr

from windcommit.fitting import (
    CorrelationSpec,
    EmConfig,
    MarginalHistogram,
    em_fit,
    histogram_cdf,
    histogram_inverse_cdf,
    nataf_adjusted_correlation,
    nataf_sample,
    sample_gmm,
)
from windcommit.gmm import Gmm, affine_project, cdf as gmm_cdf, validate_gmm

from oracles import nataf_adjusted_corr_oracle


def gaussian_histogram(mean=0.0, std=1.0, bins=80, span=5.0):
    edges = np.linspace(mean - span * std, mean + span * std, bins + 1)
    cdf_vals = norm.cdf(edges, loc=mean, scale=std)
    probs = np.diff(cdf_vals)
    probs /= probs.sum()
    return MarginalHistogram(edges, probs)


def bimodal_histogram(sep=6.0, std=1.0, bins=80):
    edges = np.linspace(-sep - 4 * std, sep + 4 * std, bins + 1)
    cdf_vals = 0.5 * norm.cdf(edges, -sep / 2, std) + 0.5 * norm.cdf(edges, sep / 2, std)
    probs = np.diff(cdf_vals)
    probs /= probs.sum()
    return MarginalHistogram(edges, probs)


def test_histogram_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        MarginalHistogram([0.0, 0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError, match="sum to"):
        MarginalHistogram([0.0, 1.0], [0.7])


def test_histogram_inverse_cdf_uniform_median():
    h = MarginalHistogram([0.0, 1.0], [1.0])
    assert histogram_inverse_cdf(h, 0.5) == pytest.approx(0.5)
    assert histogram_inverse_cdf(h, 0.0) == 0.0
    assert histogram_inverse_cdf(h, 1.0) == 1.0


def test_histogram_inverse_cdf_breakpoint():
    h = MarginalHistogram([0.0, 1.0, 2.0], [0.25, 0.75])
    assert histogram_inverse_cdf(h, 0.25) == pytest.approx(1.0)


def test_histogram_inverse_cdf_interpolates():
    h = MarginalHistogram([-2.0, 0.0, 2.0], [0.5, 0.5])
    # q=0.75 sits halfway through the second bin
    assert histogram_inverse_cdf(h, 0.75) == pytest.approx(1.0)


def test_histogram_inverse_cdf_rejects_bad_levels():
    h = MarginalHistogram([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        histogram_inverse_cdf(h, -0.01)
    with pytest.raises(ValueError):
        histogram_inverse_cdf(h, 1.01)


def test_histogram_cdf_round_trip():
    h = bimodal_histogram()
    qs = np.linspace(0.01, 0.99, 23)
    xs = histogram_inverse_cdf(h, qs)
    np.testing.assert_allclose(histogram_cdf(h, xs), qs, atol=1e-12)


def test_correlation_spec_validation():
    with pytest.raises(ValueError, match="symmetric"):
        CorrelationSpec(np.array([[1.0, 0.5], [0.2, 1.0]]))
    with pytest.raises(ValueError, match="unit diagonal"):
        CorrelationSpec(np.array([[1.1, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="smallest eigenvalue"):
        CorrelationSpec(np.array([[1.0, 0.99, -0.99], [0.99, 1.0, 0.99], [-0.99, 0.99, 1.0]]))


def test_nataf_identity_gives_independent_columns():
    h = [gaussian_histogram(), gaussian_histogram(2.0, 3.0)]
    x = nataf_sample(h, CorrelationSpec(np.eye(2)), 40000, seed=1)
    r = np.corrcoef(x, rowvar=False)[0, 1]
    assert abs(r) <= 3.0 / math.sqrt(40000)


def test_nataf_gaussian_marginals_preserve_r():
    # for Gaussian marginals the Nataf adjustment is the identity
    h = [gaussian_histogram(0.0, 1.0, bins=400), gaussian_histogram(0.0, 1.0, bins=400)]
    spec = CorrelationSpec(np.array([[1.0, 0.5], [0.5, 1.0]]))
    rz = nataf_adjusted_correlation(h, spec)
    assert rz[0, 1] == pytest.approx(0.5, abs=5e-3)
    x = nataf_sample(h, spec, 100000, seed=2)
    r = np.corrcoef(x, rowvar=False)[0, 1]
    assert r == pytest.approx(0.5, abs=0.02)


def test_nataf_bimodal_rank_correlation_matches_quadrature_oracle():
    h = [bimodal_histogram(), bimodal_histogram(sep=4.0)]
    target = 0.4
    spec = CorrelationSpec(np.array([[1.0, target], [target, 1.0]]))
    x = nataf_sample(h, spec, 60000, seed=3)
    rho_z = nataf_adjusted_corr_oracle(
        lambda u: histogram_inverse_cdf(h[0], u),
        lambda u: histogram_inverse_cdf(h[1], u),
        h[0].moments(),
        h[1].moments(),
        target,
    )
    # Gaussian copula: Spearman rho = (6/pi) asin(rho_z / 2)
    expected_rank = 6.0 / math.pi * math.asin(rho_z / 2.0)
    observed_rank = spearmanr(x[:, 0], x[:, 1]).statistic
    assert observed_rank == pytest.approx(expected_rank, abs=0.03)


def test_nataf_marginals_preserved():
    h = [bimodal_histogram(), gaussian_histogram(1.0, 2.0)]
    spec = CorrelationSpec(np.array([[1.0, 0.3], [0.3, 1.0]]))
    n = 50000
    x = nataf_sample(h, spec, n, seed=4)
    for j, hist in enumerate(h):
        grid = np.linspace(hist.bin_edges[0], hist.bin_edges[-1], 300)
        emp = np.searchsorted(np.sort(x[:, j]), grid, side="right") / n
        ks = np.max(np.abs(emp - histogram_cdf(hist, grid)))
        assert ks <= 2.0 / math.sqrt(n)


def test_nataf_deterministic():
    h = [gaussian_histogram(), gaussian_histogram()]
    spec = CorrelationSpec(np.array([[1.0, 0.2], [0.2, 1.0]]))
    a = nataf_sample(h, spec, 1000, seed=9)
    b = nataf_sample(h, spec, 1000, seed=9)
    assert np.array_equal(a, b)


def test_em_single_component_is_closed_form_mle():
    rng = np.random.default_rng(11)
    x = rng.multivariate_normal([1.0, -2.0], [[2.0, 0.4], [0.4, 1.0]], size=500)
    g = em_fit(x, EmConfig(n_components=1, seed=0))
    np.testing.assert_allclose(g.components[0].mean, x.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(
        g.components[0].covariance, np.cov(x, rowvar=False, bias=True), atol=1e-9
    )


def test_em_recovers_gaussian_parameters():
    rng = np.random.default_rng(12)
    x = rng.multivariate_normal([1.0, -1.0], np.diag([2.0, 1.0]), size=20000)
    g = em_fit(x, EmConfig(n_components=1, seed=0))
    np.testing.assert_allclose(g.components[0].mean, [1.0, -1.0], atol=0.05)
    np.testing.assert_allclose(g.components[0].covariance, np.diag([2.0, 1.0]), atol=0.1)


def test_em_separates_two_clusters():
    rng = np.random.default_rng(13)
    a = rng.multivariate_normal([-10.0, 0.0], np.eye(2), size=4000)
    b = rng.multivariate_normal([10.0, 0.0], np.eye(2), size=4000)
    x = np.vstack([a, b])
    g = em_fit(x, EmConfig(n_components=2, seed=3))
    w = np.sort(g.weights)
    assert w == pytest.approx([0.5, 0.5], abs=0.02)
    centers = sorted(c.mean[0] for c in g.components)
    assert centers[0] == pytest.approx(-10.0, abs=0.1)
    assert centers[1] == pytest.approx(10.0, abs=0.1)


def test_em_log_likelihood_monotone():
    rng = np.random.default_rng(14)
    x = np.vstack(
        [
            rng.multivariate_normal([-3.0, 1.0], [[1.0, 0.3], [0.3, 0.5]], size=3000),
            rng.multivariate_normal([4.0, -2.0], [[0.8, -0.2], [-0.2, 1.2]], size=2000),
        ]
    )
    history = []
    em_fit(x, EmConfig(n_components=3, seed=5), log_likelihood_history=history)
    diffs = np.diff(history)
    assert np.all(diffs >= -1e-10 * np.abs(history[:-1]))


def test_em_mixture_beats_single_gaussian_on_bimodal_marginal():
    rng = np.random.default_rng(15)
    n = 20000
    comp = rng.random(n) < 0.5
    x = np.where(comp, rng.normal(-4.0, 1.0, n), rng.normal(4.0, 1.5, n))[:, None]
    g10 = em_fit(x, EmConfig(n_components=10, seed=1))
    g1 = em_fit(x, EmConfig(n_components=1, seed=1))
    grid = np.linspace(-10, 10, 200)
    emp = np.searchsorted(np.sort(x[:, 0]), grid, side="right") / n
    u10 = affine_project(g10, np.ones(1))
    u1 = affine_project(g1, np.ones(1))
    ks10 = np.max(np.abs(emp - gmm_cdf(u10, grid)))
    ks1 = np.max(np.abs(emp - gmm_cdf(u1, grid)))
    assert ks10 < ks1


def test_em_rejects_degenerate_column():
    x = np.column_stack([np.arange(10.0), np.full(10, 3.0)])
    with pytest.raises(ValueError, match="zero variance"):
        em_fit(x, EmConfig(n_components=1, seed=0))


def test_em_output_passes_validation():
    rng = np.random.default_rng(16)
    x = rng.normal(size=(500, 3))
    g = em_fit(x, EmConfig(n_components=4, seed=2))
    assert validate_gmm(g) == []


def test_sample_gmm_law_of_large_numbers():
    g = Gmm.from_parameters([1.0], [[2.0, -1.0]], [np.diag([4.0, 1.0])])
    n = 100000
    x = sample_gmm(g, n, seed=21)
    for j, (mu, var) in enumerate(zip([2.0, -1.0], [4.0, 1.0])):
        assert x[:, j].mean() == pytest.approx(mu, abs=3.0 * math.sqrt(var / n))


def test_sample_gmm_component_frequencies():
    g = Gmm.from_parameters(
        [0.3, 0.7], [[-50.0], [50.0]], [np.eye(1), np.eye(1)]
    )
    n = 50000
    x = sample_gmm(g, n, seed=22)
    frac = float(np.mean(x[:, 0] < 0))
    assert frac == pytest.approx(0.3, abs=3.0 * math.sqrt(0.21 / n))


def test_sample_gmm_covariance_matches_mixture_moments():
    g = Gmm.from_parameters(
        [0.4, 0.6],
        [[1.0, 0.0], [-2.0, 3.0]],
        [np.array([[2.0, 0.5], [0.5, 1.0]]), np.diag([1.0, 4.0])],
    )
    x = sample_gmm(g, 10**6, seed=23)
    emp = np.cov(x, rowvar=False)
    np.testing.assert_allclose(emp, g.covariance, rtol=0.05)


def test_sample_gmm_deterministic():
    g = Gmm.from_parameters([0.5, 0.5], [[0.0], [5.0]], [np.eye(1), np.eye(1)])
    assert np.array_equal(sample_gmm(g, 777, seed=1), sample_gmm(g, 777, seed=1))


def test_affine_invariance_against_monte_carlo():
    rng = np.random.default_rng(31)
    a = rng.normal(size=(3, 3))
    g = Gmm.from_parameters(
        [0.5, 0.5],
        rng.normal(scale=2.0, size=(2, 3)),
        [a @ a.T + np.eye(3), np.diag([1.0, 2.0, 0.5])],
    )
    s = rng.normal(size=3)
    u = affine_project(g, s)
    n = 10**6
    draws = sample_gmm(g, n, seed=32) @ s
    for x in np.quantile(draws, [0.1, 0.4, 0.7, 0.95]):
        emp = float(np.mean(draws <= x))
        assert gmm_cdf(u, float(x)) == pytest.approx(emp, abs=4.0 / math.sqrt(n))
