"""End-to-end solve of the 3-bus case: quantiles, MIQP, schedule, MPS export.

The chance constraints are converted to deterministic rows through mixture
quantiles before any optimization happens, so the timing split between the
quantile phase and the branch-and-bound phase is printed explicitly.
"""

import time

import numpy as np

from windcommit.cases import case_path
from windcommit.formulation import build_miqp, build_quantile_table, extract_schedule
from windcommit.gmm import read_gmm_file
from windcommit.grid import compute_ptdf, load_case
from windcommit.miqp import SolveConfig, branch_and_bound, export_mps

case = load_case(case_path("case3.json"))
gmms = read_gmm_file(case.uncertainty.gmm_file)
ptdf = compute_ptdf(case.network)

t0 = time.perf_counter()
qt = build_quantile_table(case, gmms, ptdf)
t_quantile = time.perf_counter() - t0
n_cc = case.horizon * (2 + 2 * len(case.network.branches))
print(f"quantile phase: {n_cc} chance constraints in {t_quantile * 1e3:.2f} ms "
      f"({t_quantile / n_cc * 1e6:.0f} us each)")
print(f"  reserve-up quantiles per period: {np.round(qt.reserve_up, 2)} MW")
print(f"  reserve-dn quantiles per period: {np.round(qt.reserve_down, 2)} MW")

model = build_miqp(case, ptdf, qt)
print(f"deterministic MIQP: {len(model.variables)} variables "
      f"({len(model.binary_names)} binary), {len(model.linear_constraints)} rows")

t0 = time.perf_counter()
result = branch_and_bound(model, SolveConfig(relative_mip_gap=0.0, verbose=True))
t_solve = time.perf_counter() - t0
print(f"branch and bound: {result.status} in {t_solve:.2f} s, "
      f"{result.nodes_explored} nodes, objective {result.objective:.4f}")
print(f"quantile phase was {t_quantile / t_solve * 100:.2f}% of the solve time")

schedule = extract_schedule(case, model, result.assignment)
print("\ncommitment (rows = units, columns = periods):")
for name, row in zip(schedule.generator_names, schedule.commitment.astype(int)):
    print(f"  {name}: {row}")
print("dispatch MW:")
for name, row in zip(schedule.generator_names, schedule.power):
    print(f"  {name}: {np.round(row, 1)}")
print(f"scheduled wind MW: {np.round(schedule.wind_scheduled[0], 1)}")
print(f"curtailed wind MW: {np.round(schedule.wind_curtailed[0], 2)}")
c = schedule.costs
print(f"costs: commitment {c.uc:.1f} + fuel {c.fuel:.1f} + reserve {c.reserve:.1f} "
      f"+ curtailment {c.curtail_penalty:.2f} = {c.total:.1f} $")

export_mps(model, "/tmp/case3.mps")
print("\nwrote /tmp/case3.mps for use with an external solver")
