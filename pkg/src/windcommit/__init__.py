"""Chance-constrained unit commitment under wind uncertainty.

Wind forecast errors are modeled with per-interval Gaussian mixtures; reserve
and branch-flow chance constraints are converted to deterministic linear
constraints through mixture quantiles, the resulting MIQP is solved by
branch and bound, and schedules are validated by Monte Carlo simulation.
"""

from .gmm import (
    GaussianComponent,
    Gmm,
    GmmViolation,
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

__version__ = "0.1.0"

__all__ = [
    "GaussianComponent",
    "Gmm",
    "GmmViolation",
    "QuantileConfig",
    "UnivariateGmm",
    "affine_project",
    "cdf",
    "pdf",
    "quantile",
    "read_gmm_file",
    "validate_gmm",
    "write_gmm_file",
    "__version__",
]
