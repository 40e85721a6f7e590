"""Gaussian mixture models: affine projection to 1-d, PDF/CDF, Newton quantiles.

A mixture is closed under affine maps, so any linear combination s'x of a
mixture-distributed vector x is again a (univariate) mixture whose component
means and variances are s'mu_i and s'Sigma_i s. Quantiles of the projected
mixture are roots of the monotone equation CDF(y) - q = 0 and are solved here
with a bracketed Newton iteration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Relative floor applied to projected variances; point masses appear when the
# projection vector is orthogonal to a component's support.
_VARIANCE_FLOOR_REL = 1e-12
_VARIANCE_FLOOR_ABS = 1e-12


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted multivariate normal component (weight, mean, covariance)."""

    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.array(self.covariance, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance must be square, got shape {cov.shape}")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError(
                f"mean has length {mean.shape[0]} but covariance is {cov.shape[0]}x{cov.shape[1]}"
            )
        mean.setflags(write=False)  # owned copies, immutable after construction
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class Gmm:
    """Multivariate Gaussian mixture: weights sum to 1, all components share a dimension.

    Construction checks only structural well-formedness; use :func:`validate_gmm`
    for the numeric invariants (weight sum, symmetry, positive semidefiniteness)
    so that data loaded from files can be inspected rather than rejected blindly.
    """

    dimension: int
    components: tuple[GaussianComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("Gmm needs at least one component")
        for k, c in enumerate(comps):
            if c.dimension != self.dimension:
                raise ValueError(
                    f"component {k} has dimension {c.dimension}, expected {self.dimension}"
                )
        object.__setattr__(self, "components", comps)
        # stacked read-only views, cached because projections query them a lot
        w = np.array([c.weight for c in comps])
        m = np.stack([c.mean for c in comps])
        s = np.stack([c.covariance for c in comps])
        for arr in (w, m, s):
            arr.setflags(write=False)
        object.__setattr__(self, "_weights", w)
        object.__setattr__(self, "_means", m)
        object.__setattr__(self, "_covariances", s)

    @classmethod
    def from_parameters(cls, weights, means, covariances) -> "Gmm":
        comps = tuple(
            GaussianComponent(float(w), np.asarray(m, dtype=float), np.asarray(c, dtype=float))
            for w, m, c in zip(weights, means, covariances)
        )
        return cls(dimension=comps[0].dimension, components=comps)

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def means(self) -> np.ndarray:
        return self._means

    @property
    def covariances(self) -> np.ndarray:
        return self._covariances

    @property
    def mean(self) -> np.ndarray:
        """Mixture mean, sum_i alpha_i mu_i."""
        return self.weights @ self.means

    @property
    def covariance(self) -> np.ndarray:
        """Mixture covariance, sum_i alpha_i (Sigma_i + mu_i mu_i') - mu mu'."""
        w, m = self.weights, self.means
        second = np.einsum("k,kij->ij", w, self.covariances)
        second += np.einsum("k,ki,kj->ij", w, m, m)
        mu = w @ m
        return second - np.outer(mu, mu)


class UnivariateGmm:
    """One-dimensional Gaussian mixture stored as (weights, means, variances) arrays.

    Zero or near-zero variances are regularized on construction so the density
    stays finite (see module constants).
    """

    __slots__ = ("weights", "means", "variances", "sigmas")

    def __init__(self, components):
        arr = np.asarray(list(components), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
            raise ValueError("expected a nonempty sequence of (weight, mean, variance) triples")
        w, m, v = arr[:, 0], arr[:, 1], arr[:, 2]
        if np.any(w <= 0):
            raise ValueError("component weights must be positive")
        ws = w.sum()
        if abs(ws - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 (residual {ws - 1.0:.3e})")
        if np.any(v < -1e-9 * max(1.0, float(np.max(np.abs(v))))):
            raise ValueError("negative component variance")
        v = np.maximum(v, 0.0)
        floor = max(_VARIANCE_FLOOR_REL * float(v.max()), _VARIANCE_FLOOR_ABS)
        v = np.maximum(v, floor)
        sigmas = np.sqrt(v)
        for arr in (w, m, v, sigmas):  # immutable after construction
            arr.setflags(write=False)
        self.weights = w
        self.means = m
        self.variances = v
        self.sigmas = sigmas

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)


@dataclass(frozen=True)
class QuantileConfig:
    """Newton iteration controls: |CDF(y) - q| <= tolerance, at most max_iterations steps."""

    tolerance: float = 1e-9
    max_iterations: int = 100

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


_DEFAULT_QUANTILE_CONFIG = QuantileConfig()


def affine_project(g: Gmm, s) -> UnivariateGmm:
    """Project a mixture onto the direction s: component i maps to (a_i, s'mu_i, s'Sigma_i s)."""
    s = np.asarray(s, dtype=float)
    if s.shape != (g.dimension,):
        raise ValueError(f"projection vector has shape {s.shape}, expected ({g.dimension},)")
    w = g.weights
    m = g.means @ s
    v = np.einsum("i,kij,j->k", s, g.covariances, s)
    # s'Sigma s can come out a hair negative for PSD Sigma; clip roundoff only.
    v = np.where(np.abs(v) < 1e-12 * max(1.0, float(np.max(np.abs(v)))), np.maximum(v, 0.0), v)
    return UnivariateGmm(np.column_stack([w, m, v]))


def cdf(u: UnivariateGmm, x):
    """Mixture CDF sum_i a_i Phi((x - m_i)/sigma_i), Phi via the error function."""
    xa = np.asarray(x, dtype=float)
    z = (xa[..., None] - u.means) / (u.sigmas * _SQRT2)
    out = (0.5 * (1.0 + erf(z))) @ u.weights
    return float(out) if xa.ndim == 0 else out


def pdf(u: UnivariateGmm, x):
    """Mixture density sum_i a_i phi((x - m_i)/sigma_i)/sigma_i."""
    xa = np.asarray(x, dtype=float)
    z = (xa[..., None] - u.means) / u.sigmas
    out = (np.exp(-0.5 * z * z) * (_INV_SQRT_2PI / u.sigmas)) @ u.weights
    return float(out) if xa.ndim == 0 else out


def _cdf_and_pdf(u: UnivariateGmm, x: float) -> tuple[float, float]:
    # one pass over the components for the Newton iteration
    z = (x - u.means) / u.sigmas
    c = float((0.5 * (1.0 + erf(z / _SQRT2))) @ u.weights)
    d = float((np.exp(-0.5 * z * z) * (_INV_SQRT_2PI / u.sigmas)) @ u.weights)
    return c, d


def quantile(u: UnivariateGmm, q: float, cfg: QuantileConfig | None = None) -> float:
    """Solve CDF(y) = q by safeguarded Newton iteration.

    The iterate starts at max_i m_i for q >= 0.9, min_i m_i for q <= 0.1 and at
    the mixture mean otherwise, and is kept inside a sign-changing bracket;
    whenever a Newton step leaves the bracket or the density underflows, the
    step falls back to bisection, so convergence follows from monotonicity of
    the CDF. Returns y with |CDF(y) - q| <= cfg.tolerance.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    if cfg is None:
        cfg = _DEFAULT_QUANTILE_CONFIG

    m, sd = u.means, u.sigmas
    m_min, m_max = float(m.min()), float(m.max())
    sd_max = float(sd.max())
    # 10 sigma puts less than 8e-24 of mass outside, so this straddles the
    # root for any practical q; only absurdly extreme levels need widening.
    lo = m_min - 10.0 * sd_max
    hi = m_max + 10.0 * sd_max
    if q < 1e-12 or q > 1.0 - 1e-12:
        span = hi - lo
        while cdf(u, lo) - q >= 0.0:
            lo -= span
            span *= 2.0
        span = hi - lo
        while cdf(u, hi) - q <= 0.0:
            hi += span
            span *= 2.0

    if q >= 0.9:
        y = m_max
    elif q <= 0.1:
        y = m_min
    else:
        y = float(u.weights @ m)
    y = min(max(y, lo), hi)

    for _ in range(cfg.max_iterations):
        c, d = _cdf_and_pdf(u, y)
        f = c - q
        if abs(f) <= cfg.tolerance and (
            d <= 0.0 or abs(f / d) <= 1e-11 * max(1.0, abs(y))
        ):
            # converged: the residual is inside tolerance and the remaining
            # Newton correction would not move the root meaningfully
            return y
        if f > 0.0:
            hi = y
        elif f < 0.0:
            lo = y
        if d > 1e-300 and math.isfinite(d):
            y_new = y - f / d
            if not lo < y_new < hi:
                y_new = 0.5 * (lo + hi)
        else:
            y_new = 0.5 * (lo + hi)
        y = y_new

    if abs(cdf(u, y) - q) <= cfg.tolerance:
        return y
    raise RuntimeError(
        f"quantile iteration cap {cfg.max_iterations} exhausted at q={q}; "
        f"bracket [{lo:.6g}, {hi:.6g}], |F|={abs(cdf(u, y) - q):.3e}"
    )


def _batch_quantiles(weights, means, variances, qs, cfg: QuantileConfig | None = None):
    """Vectorized counterpart of :func:`quantile` for a rectangular batch.

    Arrays are (B, K): B independent univariate mixtures sharing a component
    count, each solved at its own level qs[b]. Iteration logic and convergence
    criteria match the scalar routine; entries that fail to converge inside
    the iteration cap are re-solved (or re-raised) through the scalar path.
    Levels outside [1e-12, 1-1e-12] also fall back to the scalar path, which
    owns the bracket-widening loop.
    """
    if cfg is None:
        cfg = _DEFAULT_QUANTILE_CONFIG
    w = np.asarray(weights, dtype=float)
    m = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    qs = np.asarray(qs, dtype=float)
    if np.any(qs <= 0.0) or np.any(qs >= 1.0):
        raise ValueError("quantile levels must lie in (0, 1)")
    v = np.maximum(v, 0.0)
    floor = np.maximum(_VARIANCE_FLOOR_REL * v.max(axis=1, keepdims=True), _VARIANCE_FLOOR_ABS)
    v = np.maximum(v, floor)
    sd = np.sqrt(v)

    def scalar(b):
        keep = w[b] > 0.0  # zero-weight rows are rectangular-batch padding
        u = UnivariateGmm(np.column_stack([w[b][keep], m[b][keep], v[b][keep]]))
        return quantile(u, float(qs[b]), cfg)

    extreme = (qs < 1e-12) | (qs > 1.0 - 1e-12)

    m_min = m.min(axis=1)
    m_max = m.max(axis=1)
    sd_max = sd.max(axis=1)
    lo = m_min - 10.0 * sd_max
    hi = m_max + 10.0 * sd_max
    y = np.where(qs >= 0.9, m_max, np.where(qs <= 0.1, m_min, np.sum(w * m, axis=1)))
    y = np.clip(y, lo, hi)

    active = ~extreme
    for _ in range(cfg.max_iterations):
        z = (y[:, None] - m) / sd
        c = np.sum(w * 0.5 * (1.0 + erf(z / _SQRT2)), axis=1)
        d = np.sum(w * np.exp(-0.5 * z * z) * (_INV_SQRT_2PI / sd), axis=1)
        f = c - qs
        safe_d = np.where(d > 0.0, d, 1.0)
        done = (np.abs(f) <= cfg.tolerance) & (
            (d <= 0.0) | (np.abs(f / safe_d) <= 1e-11 * np.maximum(1.0, np.abs(y)))
        )
        active = active & ~done
        if not np.any(active):
            break
        hi = np.where(active & (f > 0.0), y, hi)
        lo = np.where(active & (f < 0.0), y, lo)
        newton = (d > 1e-300) & np.isfinite(d)
        y_new = np.where(newton, y - f / safe_d, 0.5 * (lo + hi))
        outside = (y_new <= lo) | (y_new >= hi)
        y_new = np.where(outside, 0.5 * (lo + hi), y_new)
        y = np.where(active, y_new, y)

    leftovers = np.flatnonzero(active | extreme)
    for b in leftovers:
        y[b] = scalar(int(b))
    return y


@dataclass(frozen=True)
class GmmViolation:
    """One violated mixture invariant with its numeric residual."""

    kind: str  # weight_sum | weight_sign | symmetry | psd | dimension
    component: int | None
    residual: float
    message: str


def validate_gmm(g: Gmm) -> list[GmmViolation]:
    """Report every invariant violation; an empty list means the mixture is valid."""
    out: list[GmmViolation] = []
    w = g.weights
    ws = float(w.sum())
    if abs(ws - 1.0) > 1e-9:
        out.append(
            GmmViolation("weight_sum", None, ws - 1.0, f"weights sum to {ws:.12g}, expected 1")
        )
    for k, c in enumerate(g.components):
        if c.weight <= 0:
            out.append(
                GmmViolation("weight_sign", k, c.weight, f"component {k} weight {c.weight} <= 0")
            )
        if c.dimension != g.dimension:
            out.append(
                GmmViolation(
                    "dimension",
                    k,
                    c.dimension - g.dimension,
                    f"component {k} dimension {c.dimension} != {g.dimension}",
                )
            )
            continue
        cov = c.covariance
        scale = max(1.0, float(np.max(np.abs(cov))))
        asym = float(np.max(np.abs(cov - cov.T)))
        if asym > 1e-9 * scale:
            out.append(
                GmmViolation(
                    "symmetry", k, asym, f"component {k} covariance asymmetry {asym:.3e}"
                )
            )
            cov = 0.5 * (cov + cov.T)
        eigs = np.linalg.eigvalsh(cov)
        if eigs[0] < -1e-9 * max(eigs[-1], 0.0) - 1e-15:
            out.append(
                GmmViolation(
                    "psd", k, float(eigs[0]), f"component {k} smallest eigenvalue {eigs[0]:.3e}"
                )
            )
    return out


def write_gmm_file(gmms, path) -> None:
    """Write per-interval mixtures as a JSON array of {dimension, components} documents."""
    docs = []
    for g in gmms:
        docs.append(
            {
                "dimension": g.dimension,
                "components": [
                    {
                        "weight": c.weight,
                        "mean": c.mean.tolist(),
                        "covariance": c.covariance.tolist(),
                    }
                    for c in g.components
                ],
            }
        )
    with open(path, "w") as f:
        json.dump(docs, f, indent=1)
        f.write("\n")


def read_gmm_file(path) -> list[Gmm]:
    """Read a GMM parameter file and validate every interval's mixture."""
    with open(path) as f:
        docs = json.load(f)
    if not isinstance(docs, list) or not docs:
        raise ValueError(f"{path}: expected a nonempty JSON array of mixture documents")
    gmms = []
    for t, doc in enumerate(docs):
        try:
            comps = tuple(
                GaussianComponent(float(c["weight"]), c["mean"], c["covariance"])
                for c in doc["components"]
            )
            g = Gmm(dimension=int(doc["dimension"]), components=comps)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: interval {t}: {exc}") from exc
        violations = validate_gmm(g)
        if violations:
            detail = "; ".join(v.message for v in violations)
            raise ValueError(f"{path}: interval {t}: invalid mixture: {detail}")
        gmms.append(g)
    return gmms
