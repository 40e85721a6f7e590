"""Mixture representation, projection, PDF/CDF and Newton quantiles."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from windcommit.gmm import (
    GaussianComponent,
    Gmm,
    QuantileConfig,
    UnivariateGmm,
    affine_project,
    cdf,
    pdf,
    quantile,
    read_gmm_file,
    validate_gmm,
    write_gmm_file,
)

from oracles import bisection_quantile, random_mixture_params, standard_normal_quantile


def uni(*triples):
    return UnivariateGmm(triples)


def test_affine_project_single_component():
    g = Gmm.from_parameters([1.0], [[1.0, 2.0]], [np.eye(2)])
    u = affine_project(g, [1.0, 1.0])
    assert u.means[0] == pytest.approx(3.0)
    assert u.variances[0] == pytest.approx(2.0)


def test_affine_project_unit_vector_is_marginal():
    rng = np.random.default_rng(7)
    covs = []
    for _ in range(3):
        a = rng.normal(size=(2, 2))
        covs.append(a @ a.T + 0.5 * np.eye(2))
    w = rng.uniform(0.2, 1.0, 3)
    w /= w.sum()
    means = rng.normal(size=(3, 2))
    g = Gmm.from_parameters(w, means, covs)
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1.0
        u = affine_project(g, e)
        assert u.means == pytest.approx(means[:, j])
        assert u.variances == pytest.approx([c[j][j] for c in covs])


def test_affine_project_two_components_hand_computed():
    # s'mu and s'Sigma s worked by hand for s=(2,1).
    g = Gmm.from_parameters(
        [0.3, 0.7],
        [[0.0, 0.0], [1.0, -1.0]],
        [np.diag([4.0, 1.0]), np.diag([1.0, 1.0])],
    )
    u = affine_project(g, [2.0, 1.0])
    assert u.weights == pytest.approx([0.3, 0.7])
    assert u.means == pytest.approx([0.0, 1.0])
    assert u.variances == pytest.approx([17.0, 5.0])


def test_affine_project_dimension_mismatch():
    g = Gmm.from_parameters([1.0], [[0.0, 0.0]], [np.eye(2)])
    with pytest.raises(ValueError):
        affine_project(g, [1.0, 2.0, 3.0])


def test_cdf_symmetry_cases():
    assert cdf(uni((1.0, 0.0, 1.0)), 0.0) == pytest.approx(0.5)
    assert cdf(uni((0.5, -2.0, 1.0), (0.5, 2.0, 1.0)), 0.0) == pytest.approx(0.5)


def test_cdf_matches_bisected_normal_quantile():
    # x chosen as the 2% point of N(0, 100): z_{0.02} * 10 from the bisection oracle.
    x = standard_normal_quantile(0.02) * 10.0
    assert x == pytest.approx(-20.5374891, abs=1e-6)
    assert cdf(uni((1.0, 0.0, 100.0)), x) == pytest.approx(0.02, abs=1e-12)


def test_cdf_monotone_and_bounded():
    u = uni((0.4, -3.0, 2.0), (0.6, 5.0, 7.0))
    xs = np.linspace(-40, 40, 400)
    vals = cdf(u, xs)
    assert np.all(np.diff(vals) >= 0)
    assert np.all((vals >= 0) & (vals <= 1))


def test_pdf_standard_normal_peak():
    assert pdf(uni((1.0, 0.0, 1.0)), 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi))


def test_pdf_far_tail_underflows():
    u = uni((0.5, 0.0, 1.0), (0.5, 3.0, 4.0))
    x = u.mean + 40.0 * u.sigmas.max()
    assert pdf(u, x) < 1e-300


def test_pdf_two_component_sum():
    val = pdf(uni((0.5, 0.0, 1.0), (0.5, 0.0, 4.0)), 0.0)
    expected = 0.5 / math.sqrt(2 * math.pi) + 0.5 / (2.0 * math.sqrt(2 * math.pi))
    assert val == pytest.approx(expected, abs=1e-8)
    assert val == pytest.approx(0.29920671, abs=1e-8)


def test_quantile_median_of_symmetric():
    assert quantile(uni((1.0, 0.0, 1.0)), 0.5) == pytest.approx(0.0, abs=1e-9)
    assert quantile(uni((0.5, -2.0, 1.0), (0.5, 2.0, 1.0)), 0.5) == pytest.approx(0.0, abs=1e-8)


def test_quantile_gaussian_two_percent():
    y = quantile(uni((1.0, 0.0, 100.0)), 0.02)
    assert y == pytest.approx(-20.5374891, abs=1e-6)


def test_quantile_round_trip_at_forward_cdf_value():
    u = uni((0.5, -2.0, 1.0), (0.5, 2.0, 1.0))
    q = cdf(u, 2.0)
    assert q == pytest.approx(0.7499842, abs=1e-6)
    assert quantile(u, q) == pytest.approx(2.0, abs=1e-6)


def test_quantile_rejects_bad_levels():
    u = uni((1.0, 0.0, 1.0))
    for q in (0.0, 1.0, -0.1, 1.7):
        with pytest.raises(ValueError):
            quantile(u, q)


def test_quantile_round_trip_property():
    rng = np.random.default_rng(101)
    for _ in range(200):
        w, m, s = random_mixture_params(rng)
        u = UnivariateGmm(np.column_stack([w, m, s**2]))
        q = float(rng.uniform(0.001, 0.999))
        y = quantile(u, q)
        assert abs(cdf(u, y) - q) <= 1e-9


def test_quantile_monotone_in_level():
    rng = np.random.default_rng(5)
    for _ in range(30):
        w, m, s = random_mixture_params(rng, max_components=8)
        u = UnivariateGmm(np.column_stack([w, m, s**2]))
        qs = np.sort(rng.uniform(0.001, 0.999, size=6))
        ys = [quantile(u, float(q)) for q in qs]
        assert all(a <= b + 1e-12 for a, b in zip(ys, ys[1:]))


def test_batch_quantiles_match_scalar():
    from windcommit.gmm import _batch_quantiles

    rng = np.random.default_rng(404)
    k = 8
    batch_w, batch_m, batch_v, qs, expected = [], [], [], [], []
    for _ in range(60):
        w, m, s = random_mixture_params(rng, max_components=k, min_components=k)
        q = float(rng.uniform(0.005, 0.995))
        u = UnivariateGmm(np.column_stack([w, m, s**2]))
        batch_w.append(w)
        batch_m.append(m)
        batch_v.append(s**2)
        qs.append(q)
        expected.append(quantile(u, q))
    got = _batch_quantiles(np.array(batch_w), np.array(batch_m), np.array(batch_v), np.array(qs))
    np.testing.assert_allclose(got, expected, atol=1e-9)


def test_batch_quantiles_zero_weight_padding():
    from windcommit.gmm import _batch_quantiles

    w = np.array([[0.4, 0.6, 0.0]])
    m = np.array([[-1.0, 2.0, 0.0]])
    v = np.array([[1.0, 4.0, 1.0]])
    u = UnivariateGmm([(0.4, -1.0, 1.0), (0.6, 2.0, 4.0)])
    got = _batch_quantiles(w, m, v, np.array([0.25]))
    assert got[0] == pytest.approx(quantile(u, 0.25), abs=1e-9)


def test_quantile_matches_bisection_oracle():
    rng = np.random.default_rng(202)
    for _ in range(100):
        w, m, s = random_mixture_params(rng)
        u = UnivariateGmm(np.column_stack([w, m, s**2]))
        q = float(rng.uniform(0.005, 0.995))
        assert quantile(u, q) == pytest.approx(bisection_quantile(w, m, s, q), abs=1e-7)


def test_quantile_shift_scale_equivariance():
    rng = np.random.default_rng(33)
    for _ in range(25):
        w, m, s = random_mixture_params(rng, max_components=6)
        u = UnivariateGmm(np.column_stack([w, m, s**2]))
        a = float(rng.uniform(0.2, 5.0))
        b = float(rng.normal(0, 10))
        u2 = UnivariateGmm(np.column_stack([w, a * m + b, a * a * s**2]))
        q = float(rng.uniform(0.01, 0.99))
        assert quantile(u2, q) == pytest.approx(a * quantile(u, q) + b, abs=1e-7)


def test_pdf_integrates_to_one():
    rng = np.random.default_rng(17)
    for _ in range(5):
        w, m, s = random_mixture_params(rng, max_components=5)
        u = UnivariateGmm(np.column_stack([w, m, s**2]))
        sigma = math.sqrt(float(u.weights @ (u.variances + u.means**2)) - u.mean**2)
        lo, hi = u.mean - 12 * sigma, u.mean + 12 * sigma
        total, _ = quad(lambda x: pdf(u, x), lo, hi, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)


def test_zero_variance_component_is_regularized():
    u = uni((0.5, 0.0, 0.0), (0.5, 1.0, 4.0))
    assert u.variances[0] > 0
    # still answers quantile queries without blowing up
    y = quantile(u, 0.25)
    assert math.isfinite(y)


def test_quantile_config_validation():
    with pytest.raises(ValueError):
        QuantileConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        QuantileConfig(max_iterations=0)


def test_validate_gmm_accepts_valid():
    g = Gmm.from_parameters(
        [0.4, 0.6], [[0.0, 0.0], [1.0, 1.0]], [np.eye(2), 2.0 * np.eye(2)]
    )
    assert validate_gmm(g) == []


def test_validate_gmm_weight_sum_residual():
    g = Gmm.from_parameters([0.6, 0.6], [[0.0], [1.0]], [np.eye(1), np.eye(1)])
    violations = validate_gmm(g)
    assert any(v.kind == "weight_sum" and abs(v.residual - 0.2) < 1e-12 for v in violations)


def test_validate_gmm_detects_indefinite_covariance():
    # rotate diag(2, -0.5) so the defect is off-axis; eigendecomposition must find it
    theta = 0.3
    r = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    cov = r @ np.diag([2.0, -0.5]) @ r.T
    g = Gmm.from_parameters([1.0], [[0.0, 0.0]], [cov])
    violations = validate_gmm(g)
    psd = [v for v in violations if v.kind == "psd"]
    assert len(psd) == 1
    assert psd[0].residual == pytest.approx(-0.5, abs=1e-9)


def test_validate_gmm_detects_asymmetry():
    cov = np.array([[1.0, 0.3], [0.0, 1.0]])
    g = Gmm.from_parameters([1.0], [[0.0, 0.0]], [cov])
    assert any(v.kind == "symmetry" for v in validate_gmm(g))


def test_gmm_file_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    gmms = []
    for _ in range(3):
        a = rng.normal(size=(2, 2))
        g = Gmm.from_parameters(
            [0.25, 0.75], rng.normal(size=(2, 2)), [a @ a.T + np.eye(2), np.eye(2)]
        )
        gmms.append(g)
    path = tmp_path / "gmm.json"
    write_gmm_file(gmms, path)
    back = read_gmm_file(path)
    assert len(back) == 3
    for g, h in zip(gmms, back):
        assert h.dimension == g.dimension
        np.testing.assert_allclose(h.weights, g.weights)
        np.testing.assert_allclose(h.means, g.means)
        np.testing.assert_allclose(h.covariances, g.covariances)


def test_read_gmm_file_rejects_invalid(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        '[{"dimension": 1, "components": ['
        '{"weight": 0.6, "mean": [0.0], "covariance": [[1.0]]},'
        '{"weight": 0.6, "mean": [1.0], "covariance": [[1.0]]}]}]'
    )
    with pytest.raises(ValueError, match="weights sum"):
        read_gmm_file(path)


def test_mixture_mean_and_covariance():
    g = Gmm.from_parameters(
        [0.3, 0.7], [[1.0, 0.0], [-1.0, 2.0]], [np.eye(2), np.diag([2.0, 0.5])]
    )
    w, m = g.weights, g.means
    mu = w @ m
    second = sum(wk * (ck + np.outer(mk, mk)) for wk, mk, ck in zip(w, m, g.covariances))
    np.testing.assert_allclose(g.mean, mu)
    np.testing.assert_allclose(g.covariance, second - np.outer(mu, mu))
