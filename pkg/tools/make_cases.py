#!/usr/bin/env python3
"""Generate the shipped case fixtures and their prefitted mixture files.

Also runs the diagnostics the fixtures must satisfy (enumeration-oracle
solvability, curtailment rescue, validation behavior with and without line
constraints, Gaussian-vs-mixture contrast, correlation-sweep monotonicity)
so fixture tuning stays honest. Run from the repo root:

    python3 tools/make_cases.py --out src/windcommit/cases [--quick]
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np
from scipy.stats import norm

from windcommit.fitting import CorrelationSpec, fit_interval_gmms
from windcommit.formulation import build_miqp, build_quantile_table, extract_schedule
from windcommit.gmm import read_gmm_file, write_gmm_file
from windcommit.grid import compute_ptdf, load_case
from windcommit.miqp import SolveConfig, branch_and_bound
from windcommit.validation import validate_schedule, worst_violation


def mixture_histogram(weights, means, sigmas, scale=1.0, n_bins=40, span=4.5):
    """Histogram of a scaled 1-d Gaussian mixture, tails kept per component."""
    w = np.asarray(weights, float)
    m = np.asarray(means, float) * scale
    s = np.asarray(sigmas, float) * scale
    lo = float(np.min(m - span * s))
    hi = float(np.max(m + span * s))
    edges = np.linspace(lo, hi, n_bins + 1)
    cdf = np.zeros_like(edges)
    for wk, mk, sk in zip(w, m, s):
        cdf += wk * norm.cdf(edges, mk, sk)
    probs = np.diff(cdf)
    probs = np.maximum(probs, 0.0)
    probs /= probs.sum()
    return {"bin_edges": edges.tolist(), "bin_probabilities": probs.tolist()}


# base error shapes (zero mean): two left-skewed farms and one bimodal farm
SHAPE_W1 = ([0.74, 0.26], [4.2, -11.953846153846154], [5.2, 10.5])
SHAPE_W2 = ([0.78, 0.22], [3.4, -12.054545454545455], [4.8, 9.5])
SHAPE_W3 = ([0.5, 0.5], [-7.5, 7.5], [4.0, 4.0])
SHAPE_CASE3 = ([0.72, 0.28], [3.0, -7.714285714285714], [4.5, 9.0])


def gen(name, bus, pmax, pmin, a, b, c, su, sd, urc, drc, urmax, drmax, ramp,
        ut, dt, on, p0, periods=8):
    return {
        "name": name, "bus": bus, "pmin": pmin, "pmax": pmax,
        "cost_quad": a, "cost_lin": b, "cost_const": c,
        "startup_cost": su, "shutdown_cost": sd,
        "reserve_up_cost": urc, "reserve_down_cost": drc,
        "reserve_up_max": urmax, "reserve_down_max": drmax,
        "ramp_up": ramp, "ramp_down": ramp,
        "min_up": ut, "min_down": dt,
        "initial": {"on": on, "power": p0, "periods_in_state": periods},
    }


def case3_doc():
    forecast = [45.0, 55.0, 60.0, 40.0]
    scales = [f / max(forecast) for f in forecast]
    intervals = [
        {
            "marginals": [mixture_histogram(*SHAPE_CASE3, scale=s)],
            "correlation": [[1.0]],
        }
        for s in scales
    ]
    # three units whose startup costs nearly tie with the no-load saving of a
    # one-period shutdown, under a zigzag load: commitment patterns compete
    return {
        "name": "case3",
        "horizon": 4,
        "network": {
            "buses": [1, 2, 3],
            "slack_bus": 1,
            "branches": [
                {"from_bus": 1, "to_bus": 2, "reactance": 0.12, "capacity": 95.0},
                {"from_bus": 1, "to_bus": 3, "reactance": 0.10, "capacity": 95.0},
                {"from_bus": 2, "to_bus": 3, "reactance": 0.08, "capacity": 95.0},
            ],
        },
        "generators": [
            gen("G1", 1, 110.0, 40.0, 0.004, 22.0, 60.0, 118.0, 20.0, 3.0, 2.5, 22.0, 22.0, 60.0, 1, 1, True, 80.0),
            gen("G2", 2, 85.0, 30.0, 0.0042, 22.4, 59.0, 117.0, 19.0, 3.1, 2.6, 21.0, 21.0, 60.0, 1, 1, False, 0.0),
            gen("G3", 3, 82.0, 28.0, 0.0041, 22.8, 58.0, 116.0, 18.0, 3.2, 2.7, 21.0, 21.0, 60.0, 1, 1, False, 0.0),
        ],
        "wind_farms": [
            {"name": "W1", "bus": 3, "capacity": 80.0, "forecast": forecast}
        ],
        "loads": [{"bus": 2, "demand": [190.0, 150.0, 195.0, 150.0]}],
        "risk": {
            "alpha_reserve_up": 0.02,
            "alpha_reserve_down": 0.02,
            "alpha_line_forward": 0.02,
            "alpha_line_reverse": 0.02,
            "reserve_up_extra": 5.0,
            "reserve_down_extra": 5.0,
            "curtailment_penalty": 0.04,
        },
        "uncertainty": {
            "intervals": intervals,
            "gmm_file": "case3-gmm.json",
        },
    }


def case3_tight_doc():
    doc = case3_doc()
    doc["name"] = "case3-tight"
    # electrically long export corridor around the wind bus: ordinary load
    # transfer barely touches it, but the wind farm cannot evacuate its full
    # forecast, so zero forced curtailment is infeasible
    doc["network"]["branches"] = [
        {"from_bus": 3, "to_bus": 1, "reactance": 0.50, "capacity": 40.0},
        {"from_bus": 3, "to_bus": 2, "reactance": 0.50, "capacity": 40.0},
        {"from_bus": 1, "to_bus": 2, "reactance": 0.12, "capacity": 130.0},
    ]
    doc["uncertainty"]["gmm_file"] = "case3-gmm.json"
    return doc


def case6_doc():
    w1 = [70.0, 85.0, 95.0, 90.0, 75.0, 60.0, 80.0, 92.0]
    w2 = [55.0, 65.0, 75.0, 70.0, 60.0, 50.0, 62.0, 72.0]
    w3 = [45.0, 55.0, 60.0, 55.0, 50.0, 40.0, 52.0, 58.0]
    r = 0.2
    corr = [[1.0, r, r], [r, 1.0, 0.0], [r, 0.0, 1.0]]
    intervals = []
    for t in range(8):
        scales = [0.8 + 0.2 * w[t] / max(w) for w in (w1, w2, w3)]
        intervals.append(
            {
                "marginals": [
                    mixture_histogram(*SHAPE_W1, scale=scales[0]),
                    mixture_histogram(*SHAPE_W2, scale=scales[1]),
                    mixture_histogram(*SHAPE_W3, scale=scales[2]),
                ],
                "correlation": corr,
            }
        )
    # three near-twin unit pairs: the relaxation cannot separate them, so the
    # search tree is a real workout rather than a root solve
    return {
        "name": "case6",
        "horizon": 8,
        "network": {
            "buses": [1, 2, 3, 4, 5, 6],
            "slack_bus": 1,
            "branches": [
                {"from_bus": 1, "to_bus": 2, "reactance": 0.10, "capacity": 220.0},
                {"from_bus": 2, "to_bus": 3, "reactance": 0.09, "capacity": 200.0},
                {"from_bus": 3, "to_bus": 4, "reactance": 0.11, "capacity": 130.0},
                {"from_bus": 4, "to_bus": 5, "reactance": 0.08, "capacity": 120.0},
                {"from_bus": 5, "to_bus": 6, "reactance": 0.09, "capacity": 120.0},
                {"from_bus": 6, "to_bus": 1, "reactance": 0.10, "capacity": 200.0},
                {"from_bus": 2, "to_bus": 5, "reactance": 0.12, "capacity": 150.0},
            ],
        },
        "generators": [
            gen("G1", 1, 160.0, 80.0, 0.0035, 17.0, 90.0, 240.0, 30.0, 7.0, 6.0, 40.0, 40.0, 70.0, 2, 2, True, 120.0),
            gen("G2", 1, 159.0, 79.5, 0.0035, 17.02, 89.8, 239.5, 30.0, 7.0, 6.0, 40.0, 40.0, 70.0, 2, 2, True, 110.0),
            gen("G3", 2, 110.0, 55.0, 0.006, 23.0, 70.0, 141.0, 15.0, 8.0, 7.0, 35.0, 35.0, 60.0, 2, 2, True, 70.0),
            gen("G4", 3, 109.0, 54.5, 0.006, 23.02, 69.8, 140.5, 15.0, 8.0, 7.0, 35.0, 35.0, 60.0, 2, 2, False, 0.0),
            gen("G5", 6, 70.0, 35.0, 0.005, 30.0, 40.0, 81.0, 10.0, 10.0, 9.0, 28.0, 28.0, 70.0, 1, 1, False, 0.0),
            gen("G6", 6, 69.5, 34.8, 0.005, 30.02, 39.8, 80.5, 10.0, 10.0, 9.0, 28.0, 28.0, 70.0, 1, 1, False, 0.0),
        ],
        "wind_farms": [
            {"name": "W1", "bus": 4, "capacity": 120.0, "forecast": w1},
            {"name": "W2", "bus": 5, "capacity": 100.0, "forecast": w2},
            {"name": "W3", "bus": 6, "capacity": 90.0, "forecast": w3},
        ],
        "loads": [
            {"bus": 2, "demand": [165.0, 205.0, 170.0, 215.0, 175.0, 160.0, 210.0, 180.0]},
            {"bus": 3, "demand": [175.0, 215.0, 180.0, 225.0, 185.0, 165.0, 220.0, 190.0]},
            {"bus": 5, "demand": [130.0, 160.0, 135.0, 170.0, 140.0, 120.0, 165.0, 145.0]},
        ],
        "risk": {
            "alpha_reserve_up": 0.02,
            "alpha_reserve_down": 0.02,
            "alpha_line_forward": 0.02,
            "alpha_line_reverse": 0.02,
            "reserve_up_extra": 10.0,
            "reserve_down_extra": 10.0,
            "curtailment_penalty": 0.03,
        },
        "uncertainty": {
            "intervals": intervals,
            "gmm_file": "case6-gmm.json",
            "sweep_pairs": [[0, 1], [0, 2]],
        },
    }


def solve_case(case, gmms, gap=0.0, allow_curtailment=True, include_lines=True,
               verbose=False):
    ptdf = compute_ptdf(case.network)
    t0 = time.perf_counter()
    qt = build_quantile_table(case, gmms, ptdf)
    t_q = time.perf_counter() - t0
    model = build_miqp(case, ptdf, qt, allow_curtailment=allow_curtailment,
                       include_line_constraints=include_lines)
    t0 = time.perf_counter()
    res = branch_and_bound(model, SolveConfig(relative_mip_gap=gap))
    t_s = time.perf_counter() - t0
    if verbose:
        print(f"  quantiles {t_q*1e3:.2f} ms, solve {t_s:.2f} s, "
              f"nodes {res.nodes_explored}, status {res.status}, "
              f"ratio {t_q/max(t_s,1e-9)*100:.2f}%")
    return ptdf, model, res, t_q, t_s


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="src/windcommit/cases")
    ap.add_argument("--quick", action="store_true",
                    help="small fit sizes for fixture tuning")
    ap.add_argument("--skip-checks", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n_fit = 20000 if args.quick else 100000
    k_fit = 5 if args.quick else 10
    fit_seed = 20240811

    for doc_fn in (case3_doc, case3_tight_doc, case6_doc):
        doc = doc_fn()
        path = out / f"{doc['name']}.json"
        path.write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {path}")

    for name in ("case3", "case6"):
        case = load_case(out / f"{name}.json")
        t0 = time.perf_counter()
        gmms = fit_interval_gmms(case.uncertainty.intervals, n_fit, k_fit, fit_seed)
        write_gmm_file(gmms, out / f"{name}-gmm.json")
        print(f"fitted {name} mixtures (N={n_fit}, K={k_fit}) "
              f"in {time.perf_counter()-t0:.1f} s")

    if args.skip_checks:
        return

    print("\n== case3: enumeration oracle scale ==")
    case3 = load_case(out / "case3.json")
    gmms3 = read_gmm_file(case3.uncertainty.gmm_file)
    build_quantile_table(case3, gmms3, compute_ptdf(case3.network))  # warm-up
    ptdf, model, res, t_q, t_s = solve_case(case3, gmms3, gap=0.0, verbose=True)
    print(f"  objective {res.objective:.4f}  binaries {len(model.binary_names)}")
    schedule = extract_schedule(case3, model, res.assignment)
    c = schedule.costs
    print(f"  costs: uc {c.uc:.1f} fuel {c.fuel:.1f} reserve {c.reserve:.1f} "
          f"curtail {c.curtail_penalty:.3f}")

    print("\n== case3-tight: curtailment rescue ==")
    tight = load_case(out / "case3-tight.json")
    gmms_t = read_gmm_file(tight.uncertainty.gmm_file)
    _, _, res_no, _, _ = solve_case(tight, gmms_t, gap=0.01, allow_curtailment=False)
    print(f"  without curtailment: {res_no.status}")
    _, model_yes, res_yes, _, _ = solve_case(tight, gmms_t, gap=0.01)
    print(f"  with curtailment: {res_yes.status}")
    if res_yes.status in ("optimal", "gap_reached"):
        sched = extract_schedule(tight, model_yes, res_yes.assignment)
        print(f"  max curtailment {sched.wind_curtailed.max():.2f} MW")

    print("\n== case6: solve + validation ==")
    case6 = load_case(out / "case6.json")
    gmms6 = read_gmm_file(case6.uncertainty.gmm_file)
    build_quantile_table(case6, gmms6, compute_ptdf(case6.network))  # warm-up
    ptdf6, model6, res6, t_q6, t_s6 = solve_case(case6, gmms6, gap=0.01, verbose=True)
    sched6 = extract_schedule(case6, model6, res6.assignment)
    print(f"  objective {res6.objective:.2f}; curtailment max {sched6.wind_curtailed.max():.2f}")
    n_val = 10**5
    report = validate_schedule(case6, ptdf6, sched6, gmms6, n_samples=n_val, seed=7)
    print(f"  with lines: worst violation-excess {worst_violation(report):.5f} "
          f"(negative is clean)")
    print(f"  reserve_up estimates: {np.round(report.reserve_up, 4)}")
    print(f"  max line_forward: {report.line_forward.max():.4f} "
          f"max line_reverse: {report.line_reverse.max():.4f}")

    print("\n== case6 without line constraints (overload contrast) ==")
    _, model_nl, res_nl, _, _ = solve_case(case6, gmms6, gap=0.01, include_lines=False)
    sched_nl = extract_schedule(case6, model_nl, res_nl.assignment)
    report_nl = validate_schedule(case6, ptdf6, sched_nl, gmms6, n_samples=n_val, seed=7)
    fwd = report_nl.line_forward.max(axis=1)
    rev = report_nl.line_reverse.max(axis=1)
    print(f"  per-branch max fwd violation: {np.round(fwd, 4)}")
    print(f"  per-branch max rev violation: {np.round(rev, 4)}")
    print(f"  overall max: {max(fwd.max(), rev.max()):.4f} (needs > 0.02)")

    print("\n== case6 Gaussian contrast ==")
    g1 = fit_interval_gmms(case6.uncertainty.intervals, n_fit, 1, fit_seed)
    _, model_g, res_g, _, _ = solve_case(case6, g1, gap=0.01)
    sched_g = extract_schedule(case6, model_g, res_g.assignment)
    report_g = validate_schedule(case6, ptdf6, sched_g, gmms6, n_samples=n_val, seed=7)
    print(f"  gaussian-driven worst excess {worst_violation(report_g):.5f} (needs > 0)")
    print(f"  reserve_up: {np.round(report_g.reserve_up, 4)}")
    print(f"  reserve_dn: {np.round(report_g.reserve_down, 4)}")
    print(f"  line max: {report_g.line_forward.max():.4f}/{report_g.line_reverse.max():.4f}")

    print("\n== case6 correlation sweep (N=20000, K=5, gap 1e-4) ==")
    costs = []
    for r in (-0.4, -0.2, 0.0, 0.2, 0.4):
        intervals = []
        for iv in case6.uncertainty.intervals:
            mat = iv.correlation.matrix.copy()
            for i, j in case6.uncertainty.sweep_pairs:
                mat[i, j] = mat[j, i] = r
            intervals.append(type(iv)(iv.marginals, CorrelationSpec(mat)))
        gmms_r = fit_interval_gmms(intervals, 20000, 5, fit_seed)
        _, model_r, res_r, _, _ = solve_case(case6, gmms_r, gap=1e-4)
        costs.append(res_r.objective)
        print(f"  r={r:+.1f}: cost {res_r.objective:.2f} nodes {res_r.nodes_explored}")
    diffs = np.diff(costs)
    print(f"  increments: {np.round(diffs, 2)} "
          f"(monotone within 0.1%: {np.all(diffs >= -0.001*np.abs(np.asarray(costs[:-1])))})")


if __name__ == "__main__":
    main()
