"""Monte Carlo validation of a schedule against the error mixtures.

Each period draws fresh forecast-error vectors from its mixture (RNG stream
derived from (seed, period), so estimates do not depend on evaluation order)
and counts, per individual chance constraint, how often the realized errors
break it: upward/downward reserve exhaustion and branch overloading in both
directions. Estimates come with 95% normal-approximation confidence bands.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .fitting import sample_gmm
from .formulation import UcSchedule, _line_sensitivities
from .grid import Case, PtdfMatrix

_Z95 = 1.959963984540054


def _ci_halfwidth(p_hat: np.ndarray, n: int) -> np.ndarray:
    return _Z95 * np.sqrt(p_hat * (1.0 - p_hat) / n)


@dataclass(frozen=True)
class ValidationReport:
    """Empirical violation probabilities per period (and branch) with 95% CIs."""

    reserve_up: np.ndarray  # (T,)
    reserve_up_ci: np.ndarray
    reserve_down: np.ndarray
    reserve_down_ci: np.ndarray
    line_forward: np.ndarray  # (L, T)
    line_forward_ci: np.ndarray
    line_reverse: np.ndarray
    line_reverse_ci: np.ndarray
    alpha_reserve_up: float
    alpha_reserve_down: float
    alpha_line_forward: np.ndarray  # (L,)
    alpha_line_reverse: np.ndarray
    sample_count: int
    seed: int


def validate_schedule(
    case: Case,
    ptdf: PtdfMatrix,
    schedule: UcSchedule,
    gmms,
    n_samples: int = 10**6,
    seed: int = 0,
) -> ValidationReport:
    """Estimate every chance constraint's violation probability by sampling.

    Upward reserve fails when total committed upward reserve cannot absorb the
    shortfall of realized wind below the curtailed schedule (plus the extra
    margin); downward reserve mirrors it; a branch fails when the realized DC
    flow leaves [-capacity, +capacity].
    """
    gmms = list(gmms)
    T = case.horizon
    if len(gmms) != T:
        raise ValueError(f"expected {T} mixtures, got {len(gmms)}")
    nw = len(case.wind_farms)
    if schedule.power.shape[1] != T or schedule.wind_curtailed.shape != (nw, T):
        raise ValueError("schedule dimensions do not match the case")
    branches = case.network.branches
    L = len(branches)
    risk = case.risk

    gen_s, farm_s, demand_term = _line_sensitivities(case, ptdf)
    forecast = np.stack([f.forecast for f in case.wind_farms])
    capacity = np.array([br.capacity for br in branches])

    p_up = np.empty(T)
    p_dn = np.empty(T)
    p_fwd = np.empty((L, T))
    p_rev = np.empty((L, T))
    for t in range(T):
        if gmms[t].dimension != nw:
            raise ValueError(f"interval {t}: mixture dimension != {nw}")
        errors = sample_gmm(gmms[t], n_samples, seed=[seed, t])  # (n, nw)
        err_sum = errors.sum(axis=1)

        total_ur = float(schedule.reserve_up[:, t].sum())
        total_dr = float(schedule.reserve_down[:, t].sum())
        p_up[t] = np.mean(total_ur < -err_sum + risk.reserve_up_extra)
        p_dn[t] = np.mean(total_dr < err_sum + risk.reserve_down_extra)

        base_flow = (
            gen_s @ schedule.power[:, t]
            + farm_s @ (forecast[:, t] - schedule.wind_curtailed[:, t])
            + demand_term[:, t]
        )
        flow = base_flow[None, :] + errors @ farm_s.T  # (n, L)
        p_fwd[:, t] = np.mean(flow > capacity[None, :], axis=0)
        p_rev[:, t] = np.mean(flow < -capacity[None, :], axis=0)

    alpha_fwd = np.array(
        [br.alpha_forward if br.alpha_forward is not None else risk.alpha_line_forward
         for br in branches]
    )
    alpha_rev = np.array(
        [br.alpha_reverse if br.alpha_reverse is not None else risk.alpha_line_reverse
         for br in branches]
    )
    return ValidationReport(
        reserve_up=p_up,
        reserve_up_ci=_ci_halfwidth(p_up, n_samples),
        reserve_down=p_dn,
        reserve_down_ci=_ci_halfwidth(p_dn, n_samples),
        line_forward=p_fwd,
        line_forward_ci=_ci_halfwidth(p_fwd, n_samples),
        line_reverse=p_rev,
        line_reverse_ci=_ci_halfwidth(p_rev, n_samples),
        alpha_reserve_up=risk.alpha_reserve_up,
        alpha_reserve_down=risk.alpha_reserve_down,
        alpha_line_forward=alpha_fwd,
        alpha_line_reverse=alpha_rev,
        sample_count=int(n_samples),
        seed=int(seed),
    )


CSV_HEADER = ["t", "constraint", "branch", "estimate", "ci_halfwidth", "alpha"]


def report_rows(report: ValidationReport) -> list[list]:
    """Stable row order: per period, reserves first, then per-branch lines."""
    rows = []
    T = report.reserve_up.shape[0]
    L = report.line_forward.shape[0]
    for t in range(T):
        rows.append(
            [t + 1, "reserve_up", "", report.reserve_up[t], report.reserve_up_ci[t],
             report.alpha_reserve_up]
        )
        rows.append(
            [t + 1, "reserve_down", "", report.reserve_down[t], report.reserve_down_ci[t],
             report.alpha_reserve_down]
        )
        for l in range(L):
            rows.append(
                [t + 1, "line_forward", l, report.line_forward[l, t],
                 report.line_forward_ci[l, t], report.alpha_line_forward[l]]
            )
            rows.append(
                [t + 1, "line_reverse", l, report.line_reverse[l, t],
                 report.line_reverse_ci[l, t], report.alpha_line_reverse[l]]
            )
    return rows


def emit_report_csv(report: ValidationReport, path) -> None:
    """One row per (period, constraint) with the estimate, CI and target level."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for row in report_rows(report):
            writer.writerow(row)


def worst_violation(report: ValidationReport, slack: float = 3.0) -> float:
    """Largest excess of any estimate over its alpha + slack*CI (<= 0 means clean)."""
    gaps = [
        float(np.max(report.reserve_up - report.alpha_reserve_up - slack * report.reserve_up_ci)),
        float(np.max(report.reserve_down - report.alpha_reserve_down - slack * report.reserve_down_ci)),
    ]
    if report.line_forward.size:
        gaps.append(
            float(
                np.max(
                    report.line_forward
                    - report.alpha_line_forward[:, None]
                    - slack * report.line_forward_ci
                )
            )
        )
        gaps.append(
            float(
                np.max(
                    report.line_reverse
                    - report.alpha_line_reverse[:, None]
                    - slack * report.line_reverse_ci
                )
            )
        )
    return max(gaps)
