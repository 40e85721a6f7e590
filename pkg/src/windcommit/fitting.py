"""Construction of joint forecast-error mixtures from marginals or samples.

Two-step pipeline: correlated samples are generated from per-farm marginal
histograms plus a correlation matrix (Nataf transformation with a Gaussian
copula whose correlation is adjusted by solving the Nataf integral equation),
then a full-covariance Gaussian mixture is fitted to the samples by EM.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp, ndtr

from .gmm import Gmm, validate_gmm

_GH_NODES = 32  # Gauss-Hermite order for the Nataf correlation integral


@dataclass(frozen=True)
class MarginalHistogram:
    """Probability histogram with uniform density inside each bin."""

    bin_edges: np.ndarray
    bin_probabilities: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        probs = np.asarray(self.bin_probabilities, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("bin_edges needs at least two entries")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be strictly increasing")
        if probs.shape != (edges.size - 1,):
            raise ValueError(
                f"expected {edges.size - 1} bin probabilities, got {probs.shape}"
            )
        if np.any(probs < 0):
            raise ValueError("bin probabilities must be nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"bin probabilities sum to {total:.12g}, expected 1")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "bin_probabilities", probs)

    @property
    def cumulative(self) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.bin_probabilities)])
        cum[-1] = 1.0
        return cum

    def moments(self) -> tuple[float, float]:
        """Exact (mean, std) of the piecewise-uniform density."""
        a, b = self.bin_edges[:-1], self.bin_edges[1:]
        p = self.bin_probabilities
        mean = float(p @ ((a + b) / 2.0))
        second = float(p @ ((a * a + a * b + b * b) / 3.0))
        return mean, math.sqrt(max(second - mean * mean, 0.0))


@dataclass(frozen=True)
class CorrelationSpec:
    """Target product-moment correlation matrix between wind farms."""

    matrix: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.matrix, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"correlation matrix must be square, got {r.shape}")
        if np.max(np.abs(r - r.T)) > 1e-9:
            raise ValueError("correlation matrix must be symmetric")
        if np.max(np.abs(np.diag(r) - 1.0)) > 1e-9:
            raise ValueError("correlation matrix must have unit diagonal")
        smallest = float(np.linalg.eigvalsh(r)[0])
        if smallest < -1e-9:
            raise ValueError(
                f"correlation matrix is not positive semidefinite (smallest eigenvalue {smallest:.3e})"
            )
        object.__setattr__(self, "matrix", r)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EmConfig:
    """EM fit controls; covariance_floor is relative to the mean data variance."""

    n_components: int
    seed: int = 0
    max_iterations: int = 500
    log_likelihood_tolerance: float = 1e-7
    covariance_floor: float = 1e-6

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.max_iterations < 1 or self.log_likelihood_tolerance <= 0:
            raise ValueError("max_iterations and log_likelihood_tolerance must be positive")
        if self.covariance_floor <= 0:
            raise ValueError("covariance_floor must be positive")


def histogram_inverse_cdf(h: MarginalHistogram, q):
    """Piecewise-linear inverse CDF; q=0 maps to the first edge, q=1 to the last."""
    qa = np.asarray(q, dtype=float)
    if np.any(qa < 0.0) or np.any(qa > 1.0):
        raise ValueError("probability levels must lie in [0, 1]")
    out = np.interp(qa, h.cumulative, h.bin_edges)
    return float(out) if qa.ndim == 0 else out


def histogram_cdf(h: MarginalHistogram, x):
    """Piecewise-linear CDF of the histogram (0 left of support, 1 right of it)."""
    xa = np.asarray(x, dtype=float)
    out = np.interp(xa, h.bin_edges, h.cumulative)
    return float(out) if xa.ndim == 0 else out


def _nataf_pair_correlation(hi: MarginalHistogram, hj: MarginalHistogram, target: float) -> float:
    """Gaussian-space correlation whose Nataf image matches the target correlation.

    Solves E[G_i(Phi(Z1)) G_j(Phi(Z2))] = target implicitly with tensor
    Gauss-Hermite quadrature and bisection over the Gaussian correlation; the
    map is monotone, so the root is unique.
    """
    if target == 0.0:
        return 0.0
    nodes, wts = np.polynomial.hermite.hermgauss(_GH_NODES)
    z = math.sqrt(2.0) * nodes
    gi = histogram_inverse_cdf(hi, ndtr(z))
    mi, si = hi.moments()
    mj, sj = hj.moments()
    if si == 0.0 or sj == 0.0:
        raise ValueError("degenerate marginal (zero variance) cannot carry correlation")
    pair_w = np.outer(wts, wts) / math.pi

    def implied(rho: float) -> float:
        z2 = rho * z[:, None] + math.sqrt(max(0.0, 1.0 - rho * rho)) * z[None, :]
        gj = histogram_inverse_cdf(hj, ndtr(z2))
        cross = float(np.sum(pair_w * gi[:, None] * gj))
        return (cross - mi * mj) / (si * sj)

    lo, hi_ = -0.999999, 0.999999
    f_lo, f_hi = implied(lo), implied(hi_)
    if target <= f_lo:
        return lo
    if target >= f_hi:
        return hi_
    for _ in range(60):
        mid = 0.5 * (lo + hi_)
        if implied(mid) < target:
            lo = mid
        else:
            hi_ = mid
    return 0.5 * (lo + hi_)


def nataf_adjusted_correlation(marginals, corr: CorrelationSpec) -> np.ndarray:
    """Pairwise-adjusted Gaussian correlation matrix, projected to PSD if needed."""
    d = corr.dimension
    rz = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            rz[i, j] = rz[j, i] = _nataf_pair_correlation(
                marginals[i], marginals[j], float(corr.matrix[i, j])
            )
    eigvals, eigvecs = np.linalg.eigh(rz)
    if eigvals[0] < 0.0:
        if eigvals[0] < -1e-10:
            warnings.warn(
                f"Nataf-adjusted correlation is indefinite (smallest eigenvalue "
                f"{eigvals[0]:.3e}); projecting to the nearest PSD correlation",
                stacklevel=2,
            )
        clipped = eigvecs @ np.diag(np.maximum(eigvals, 0.0)) @ eigvecs.T
        scale = np.sqrt(np.diag(clipped))
        rz = clipped / np.outer(scale, scale)
        np.fill_diagonal(rz, 1.0)
    return rz


def _correlation_factor(rz: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(rz)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(rz)
        return eigvecs @ np.diag(np.sqrt(np.maximum(eigvals, 0.0)))


def nataf_sample(marginals, corr: CorrelationSpec, n_samples: int, seed) -> np.ndarray:
    """Draw correlated samples whose marginals follow the given histograms.

    Standard-normal vectors with the Nataf-adjusted correlation are mapped
    through each marginal's inverse CDF. Returns an (n_samples, n_farms) array.
    """
    marginals = list(marginals)
    if len(marginals) != corr.dimension:
        raise ValueError(
            f"{len(marginals)} marginals but correlation is {corr.dimension}x{corr.dimension}"
        )
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rz = nataf_adjusted_correlation(marginals, corr)
    factor = _correlation_factor(rz)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(n_samples), corr.dimension)) @ factor.T
    u = ndtr(z)
    out = np.empty_like(z)
    for j, h in enumerate(marginals):
        out[:, j] = histogram_inverse_cdf(h, u[:, j])
    return out


def _log_gaussian(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    chol = np.linalg.cholesky(cov)
    diff = x - mean
    y = solve_triangular(chol, diff.T, lower=True)
    maha = np.sum(y * y, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * math.log(2.0 * math.pi) + logdet + maha)


def _floor_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    """Clip covariance eigenvalues from below; untouched when already healthy."""
    cov = 0.5 * (cov + cov.T)
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] >= floor:
        return cov
    vals, vecs = np.linalg.eigh(cov)
    return vecs @ np.diag(np.maximum(vals, floor)) @ vecs.T


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = np.min(
            np.stack([np.sum((x - c) ** 2, axis=1) for c in centers]), axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(x[int(rng.integers(n))])
            continue
        centers.append(x[int(rng.choice(n, p=d2 / total))])
    return np.stack(centers)


def em_fit(samples: np.ndarray, cfg: EmConfig, log_likelihood_history: list | None = None) -> Gmm:
    """Fit a full-covariance Gaussian mixture by EM with k-means++ seeding.

    Stops when the relative log-likelihood improvement drops below
    cfg.log_likelihood_tolerance or the iteration cap is hit. The returned
    mixture always passes validate_gmm. Pass a list as
    log_likelihood_history to observe the per-iteration log-likelihood.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("samples must be a 2-d array with at least two rows")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite entries")
    n, d = x.shape
    k = cfg.n_components
    if n < k:
        raise ValueError(f"{n} samples cannot support {k} components")
    col_var = x.var(axis=0)
    if np.any(col_var <= 0):
        dead = int(np.argmin(col_var))
        raise ValueError(f"column {dead} of the samples has zero variance")
    floor = cfg.covariance_floor * float(col_var.mean())

    rng = np.random.default_rng(cfg.seed)
    means = _kmeanspp_centers(x, k, rng)
    base_cov = _floor_covariance(np.cov(x, rowvar=False, bias=True).reshape(d, d), floor)
    covs = np.stack([base_cov.copy() for _ in range(k)])
    weights = np.full(k, 1.0 / k)

    prev_ll = -np.inf
    log_resp = np.empty((n, k))
    for iteration in range(cfg.max_iterations):
        for j in range(k):
            log_resp[:, j] = math.log(weights[j]) + _log_gaussian(x, means[j], covs[j])
        log_norm = logsumexp(log_resp, axis=1)
        ll = float(log_norm.sum())
        if not math.isfinite(ll):
            raise RuntimeError(f"EM log-likelihood became non-finite at iteration {iteration}")
        if log_likelihood_history is not None:
            log_likelihood_history.append(ll)
        if prev_ll > -np.inf and abs(ll - prev_ll) < cfg.log_likelihood_tolerance * abs(prev_ll):
            break
        prev_ll = ll

        resp = np.exp(log_resp - log_norm[:, None])
        mass = resp.sum(axis=0)
        for j in range(k):
            if mass[j] < 1e-12 * n:
                # collapsed component: restart it on the worst-explained sample
                worst = int(np.argmin(log_norm))
                means[j] = x[worst]
                covs[j] = base_cov.copy()
                mass[j] = 1.0
                resp[:, j] = 0.0
                resp[worst, j] = 1.0
                continue
            means[j] = resp[:, j] @ x / mass[j]
            diff = x - means[j]
            cov = (resp[:, j][:, None] * diff).T @ diff / mass[j]
            covs[j] = _floor_covariance(cov, floor)
        weights = mass / mass.sum()

    g = Gmm.from_parameters(weights, means, covs)
    violations = validate_gmm(g)
    if violations:
        raise RuntimeError(
            "EM produced an invalid mixture: " + "; ".join(v.message for v in violations)
        )
    return g


def fit_interval_gmms(intervals, n_samples: int, n_components: int, seed: int,
                      covariance_floor: float = 1e-6) -> list[Gmm]:
    """Two-step mixture construction for every interval.

    Per interval: draw Nataf-correlated samples from the marginal histograms,
    then fit a mixture by EM. Sampling and fitting seeds are derived from
    (seed, interval) so each interval is reproducible in isolation.
    """
    gmms = []
    for t, iv in enumerate(intervals):
        samples = nataf_sample(iv.marginals, iv.correlation, n_samples, seed=[seed, t])
        cfg = EmConfig(
            n_components=n_components,
            seed=(seed * 1000003 + t) % (2**63),
            covariance_floor=covariance_floor,
        )
        try:
            gmms.append(em_fit(samples, cfg))
        except (ValueError, RuntimeError) as exc:
            raise RuntimeError(f"mixture fit failed at interval {t + 1}: {exc}") from exc
    return gmms


def sample_gmm(g: Gmm, n_samples: int, seed) -> np.ndarray:
    """Draw reproducible samples: categorical component choice, then Cholesky transform.

    Covariances that fail Cholesky (PSD boundary) fall back to an eigenvalue
    factor with negative eigenvalues clipped at zero.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    w = g.weights
    idx = rng.choice(len(w), size=int(n_samples), p=w / w.sum())
    z = rng.standard_normal((int(n_samples), g.dimension))
    out = np.empty_like(z)
    for j, comp in enumerate(g.components):
        mask = idx == j
        if not np.any(mask):
            continue
        factor = _correlation_factor(comp.covariance)
        out[mask] = comp.mean + z[mask] @ factor.T
    return out
