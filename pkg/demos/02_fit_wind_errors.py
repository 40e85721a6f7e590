"""Two-step error-model construction: Nataf sampling then EM fitting.

Takes the first interval of the shipped 6-bus case (skewed and bimodal
marginals with a correlation pattern), generates correlated samples, fits a
10-component mixture and a single Gaussian to the same data, and compares
how well each reproduces the marginals.
"""

import numpy as np

from windcommit.cases import case_path
from windcommit.fitting import EmConfig, em_fit, nataf_sample
from windcommit.gmm import affine_project, cdf
from windcommit.grid import load_case

case = load_case(case_path("case6.json"))
interval = case.uncertainty.intervals[0]
farm_names = [f.name for f in case.wind_farms]

n = 60000
samples = nataf_sample(interval.marginals, interval.correlation, n, seed=42)
print(f"drew {n} correlated error samples for {farm_names}")
print(f"  sample means {np.round(samples.mean(axis=0), 3)} MW")
print(f"  sample stds  {np.round(samples.std(axis=0), 2)} MW")
print("  empirical correlation:")
print(np.round(np.corrcoef(samples, rowvar=False), 3))

history = []
mixture = em_fit(samples, EmConfig(n_components=10, seed=1), log_likelihood_history=history)
gauss = em_fit(samples, EmConfig(n_components=1, seed=1))
print(f"\nEM with K=10: {len(history)} iterations, "
      f"log-likelihood {history[0]:.1f} -> {history[-1]:.1f}")

print("\nper-farm Kolmogorov-Smirnov distance to the empirical marginal CDF:")
print(f"  {'farm':<6} {'K=10':>10} {'K=1':>10}")
for j, name in enumerate(farm_names):
    xs = np.sort(samples[:, j])
    emp = np.arange(1, n + 1) / n
    basis = np.zeros(len(farm_names))
    basis[j] = 1.0
    ks_mix = np.max(np.abs(cdf(affine_project(mixture, basis), xs) - emp))
    ks_gauss = np.max(np.abs(cdf(affine_project(gauss, basis), xs) - emp))
    print(f"  {name:<6} {ks_mix:>10.4f} {ks_gauss:>10.4f}")
print("the mixture tracks the skewed and bimodal shapes; the Gaussian cannot")

agg_mix = affine_project(mixture, np.ones(3))
agg_gauss = affine_project(gauss, np.ones(3))
from windcommit.gmm import quantile

print("\n2% lower quantile of the aggregate error (drives upward reserve):")
print(f"  mixture {quantile(agg_mix, 0.02):9.3f} MW")
print(f"  gaussian {quantile(agg_gauss, 0.02):8.3f} MW")
print(f"  empirical {np.quantile(samples.sum(axis=1), 0.02):7.3f} MW")
