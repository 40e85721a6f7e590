"""Monte Carlo violation estimation and the CSV report."""

import csv
import math

import numpy as np
import pytest

from windcommit.formulation import CostBreakdown, UcSchedule
from windcommit.gmm import Gmm
from windcommit.grid import compute_ptdf
from windcommit.validation import (
    CSV_HEADER,
    emit_report_csv,
    report_rows,
    validate_schedule,
    worst_violation,
)

from test_formulation import gaussian_gmm, make_case


def make_schedule(case, total_ur, total_dr, power_split=None, curtail=0.0):
    T = case.horizon
    ng = len(case.generators)
    nw = len(case.wind_farms)
    forecast = np.stack([f.forecast for f in case.wind_farms])
    power = np.zeros((ng, T))
    demand = np.sum([ld.demand for ld in case.loads], axis=0)
    power[0] = demand - forecast.sum(axis=0) + curtail
    commitment = np.zeros((ng, T))
    commitment[0] = 1.0
    r_up = np.zeros((ng, T))
    r_up[0] = total_ur
    r_dn = np.zeros((ng, T))
    r_dn[0] = total_dr
    curtailed = np.full((nw, T), float(curtail))
    return UcSchedule(
        generator_names=tuple(g.name for g in case.generators),
        wind_farm_names=tuple(f.name for f in case.wind_farms),
        commitment=commitment,
        power=power,
        reserve_up=r_up,
        reserve_down=r_dn,
        wind_scheduled=forecast - curtailed,
        wind_curtailed=curtailed,
        costs=CostBreakdown(0.0, 0.0, 0.0, 0.0, 0.0),
    )


def test_reserve_violation_at_quantile_boundary():
    # reserves sized exactly at the 2% quantile of N(0,100): empirical
    # violation must come back at 0.02 within Monte Carlo error
    case = make_case()
    ptdf = compute_ptdf(case.network)
    boundary = 20.5374891
    schedule = make_schedule(case, total_ur=boundary, total_dr=boundary)
    gmms = [gaussian_gmm(0.0, 100.0) for _ in range(case.horizon)]
    report = validate_schedule(case, ptdf, schedule, gmms, n_samples=10**6, seed=5)
    for t in range(case.horizon):
        assert report.reserve_up[t] == pytest.approx(0.02, abs=5e-4)
        assert report.reserve_down[t] == pytest.approx(0.02, abs=5e-4)
        assert report.reserve_up_ci[t] == pytest.approx(
            1.96 * math.sqrt(0.02 * 0.98 / 10**6), rel=0.05
        )


def test_zero_variance_mixture_never_violates():
    case = make_case()
    ptdf = compute_ptdf(case.network)
    schedule = make_schedule(case, total_ur=10.0, total_dr=10.0)
    gmms = [gaussian_gmm(0.0, 0.0) for _ in range(case.horizon)]
    report = validate_schedule(case, ptdf, schedule, gmms, n_samples=20000, seed=1)
    assert np.all(report.reserve_up == 0.0)
    assert np.all(report.reserve_down == 0.0)
    assert np.all(report.line_forward == 0.0)
    assert np.all(report.line_reverse == 0.0)


def test_zero_reserve_under_symmetric_errors_violates_half_the_time():
    case = make_case()
    ptdf = compute_ptdf(case.network)
    schedule = make_schedule(case, total_ur=0.0, total_dr=0.0)
    gmms = [
        Gmm.from_parameters([0.5, 0.5], [[-3.0], [3.0]], [np.eye(1) * 4.0, np.eye(1) * 4.0])
        for _ in range(case.horizon)
    ]
    report = validate_schedule(case, ptdf, schedule, gmms, n_samples=200000, seed=2)
    for t in range(case.horizon):
        assert report.reserve_up[t] == pytest.approx(0.5, abs=4 * report.reserve_up_ci[t])


def test_line_violation_matches_gaussian_tail():
    # single farm behind the only line, capacity shrunk so the tail is visible:
    # flow = base + s*e with s = -1, so the overload frequency is an explicit
    # Gaussian tail probability
    from scipy.stats import norm

    from windcommit.grid import Branch, Case, Network

    base_case = make_case()
    network = Network((1, 2), 1, (Branch(1, 2, 0.1, 50.0),))
    case = Case(
        name="tight-line",
        horizon=base_case.horizon,
        network=network,
        generators=base_case.generators,
        wind_farms=base_case.wind_farms,
        loads=base_case.loads,
        risk=base_case.risk,
        uncertainty=base_case.uncertainty,
    )
    ptdf = compute_ptdf(case.network)
    schedule = make_schedule(case, total_ur=30.0, total_dr=30.0)
    sigma = 8.0
    gmms = [gaussian_gmm(0.0, sigma**2) for _ in range(case.horizon)]
    report = validate_schedule(case, ptdf, schedule, gmms, n_samples=400000, seed=3)
    s = ptdf.matrix[0, ptdf.bus_index[case.wind_farms[0].bus]]
    assert s == pytest.approx(-1.0)
    demand = np.sum([ld.demand for ld in case.loads], axis=0)
    forecast = case.wind_farms[0].forecast
    cap = case.network.branches[0].capacity
    for t in range(case.horizon):
        base = s * forecast[t] + (-ptdf.matrix[0, ptdf.bus_index[2]]) * demand[t]
        # flow = base - e, so forward overload means e < base - cap
        expected_fwd = norm.cdf((base - cap) / sigma)
        expected_rev = norm.sf((base + cap) / sigma)
        assert report.line_forward[0, t] == pytest.approx(expected_fwd, abs=5e-3)
        assert report.line_reverse[0, t] == pytest.approx(expected_rev, abs=5e-3)


def test_validation_deterministic_in_seed():
    case = make_case()
    ptdf = compute_ptdf(case.network)
    schedule = make_schedule(case, total_ur=15.0, total_dr=15.0)
    gmms = [gaussian_gmm(0.0, 36.0) for _ in range(case.horizon)]
    a = validate_schedule(case, ptdf, schedule, gmms, n_samples=5000, seed=7)
    b = validate_schedule(case, ptdf, schedule, gmms, n_samples=5000, seed=7)
    np.testing.assert_array_equal(a.reserve_up, b.reserve_up)
    np.testing.assert_array_equal(a.line_forward, b.line_forward)


def test_report_csv_round_trip(tmp_path):
    case = make_case()
    ptdf = compute_ptdf(case.network)
    schedule = make_schedule(case, total_ur=15.0, total_dr=15.0)
    gmms = [gaussian_gmm(0.0, 36.0) for _ in range(case.horizon)]
    report = validate_schedule(case, ptdf, schedule, gmms, n_samples=2000, seed=9)
    path = tmp_path / "report.csv"
    emit_report_csv(report, path)
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == CSV_HEADER
    n_branches = len(case.network.branches)
    assert len(rows) - 1 == case.horizon * (2 + 2 * n_branches)
    # round-trip the estimates
    expected = report_rows(report)
    for got, want in zip(rows[1:], expected):
        assert float(got[3]) == pytest.approx(float(want[3]), abs=1e-12)
        assert got[1] == want[1]


def test_full_pipeline_on_shipped_case3_respects_risk_levels():
    from windcommit.cases import case_path
    from windcommit.formulation import build_miqp, build_quantile_table, extract_schedule
    from windcommit.gmm import read_gmm_file
    from windcommit.grid import load_case
    from windcommit.miqp import SolveConfig, branch_and_bound

    case = load_case(case_path("case3.json"))
    gmms = read_gmm_file(case.uncertainty.gmm_file)
    ptdf = compute_ptdf(case.network)
    model = build_miqp(case, ptdf, build_quantile_table(case, gmms, ptdf))
    res = branch_and_bound(model, SolveConfig(relative_mip_gap=0.0))
    schedule = extract_schedule(case, model, res.assignment)
    report = validate_schedule(case, ptdf, schedule, gmms, n_samples=10**5, seed=2027)
    assert worst_violation(report, slack=3.0) <= 0.0


def test_worst_violation_sign():
    case = make_case()
    ptdf = compute_ptdf(case.network)
    gmms = [gaussian_gmm(0.0, 100.0) for _ in range(case.horizon)]
    generous = make_schedule(case, total_ur=60.0, total_dr=60.0)
    report = validate_schedule(case, ptdf, generous, gmms, n_samples=50000, seed=11)
    assert worst_violation(report) <= 0.0
    starved = make_schedule(case, total_ur=0.5, total_dr=0.5)
    report = validate_schedule(case, ptdf, starved, gmms, n_samples=50000, seed=11)
    assert worst_violation(report) > 0.0
