"""Command-line front end: fit, solve, validate, sweep-correlation.

Every command writes a small run manifest next to its primary output so runs
can be reproduced; all randomness flows through explicit --seed flags. Exit
codes: 0 success, 1 usage or case-file problems, 2 infeasible model,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .fitting import CorrelationSpec, fit_interval_gmms
from .formulation import (
    UcSchedule,
    build_miqp,
    build_quantile_table,
    extract_schedule,
)
from .gmm import read_gmm_file, write_gmm_file
from .grid import CaseFileError, IntervalUncertainty, compute_ptdf, load_case
from .miqp import SolveConfig, branch_and_bound, export_mps
from .validation import emit_report_csv, validate_schedule

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_INTERNAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 by default, which collides with "infeasible"
    def error(self, message):
        raise _UsageError(message)


_run_started_at = None


def _write_manifest(output_path, command, args_ns, extra=None):
    manifest = {
        "command": command,
        "case": getattr(args_ns, "case", None),
        "overrides": {
            k: v
            for k, v in vars(args_ns).items()
            if k not in ("func", "case") and v is not None
        },
        "seeds": {k: v for k, v in vars(args_ns).items() if "seed" in k},
        "tool_version": __version__,
        "started_at": _run_started_at,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = Path(str(output_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=1) + "\n")


def _load_gmms(case, gmm_path):
    path = gmm_path or case.uncertainty.gmm_file
    if path is None:
        raise CaseFileError(
            "/uncertainty", "no mixture source: pass --gmm or add gmm_file to the case"
        )
    return read_gmm_file(path)


def cmd_fit(args) -> int:
    case = load_case(args.case)
    if case.uncertainty.intervals is None:
        raise CaseFileError("/uncertainty/intervals", "case has no inline marginals to fit")
    gmms = fit_interval_gmms(
        case.uncertainty.intervals, args.samples, args.components, args.seed
    )
    write_gmm_file(gmms, args.out)
    _write_manifest(args.out, "fit", args)
    print(f"fitted {len(gmms)} interval mixtures "
          f"(N={args.samples}, K={args.components}) -> {args.out}")
    return EXIT_OK


def _solve_pipeline(case, gmms, args):
    ptdf = compute_ptdf(case.network)
    t0 = time.perf_counter()
    qt = build_quantile_table(case, gmms, ptdf)
    quantile_seconds = time.perf_counter() - t0
    n_quantiles = case.horizon * (2 + 2 * len(case.network.branches))
    model = build_miqp(
        case, ptdf, qt,
        allow_curtailment=not args.no_curtailment,
        include_line_constraints=not args.no_line_constraints,
    )
    if args.export_mps:
        export_mps(model, args.export_mps)
        print(f"exported MPS -> {args.export_mps}")
    if args.no_solve:
        return ptdf, qt, model, None, quantile_seconds, n_quantiles, 0.0
    t0 = time.perf_counter()
    result = branch_and_bound(
        model, SolveConfig(relative_mip_gap=args.gap, verbose=args.verbose)
    )
    solve_seconds = time.perf_counter() - t0
    return ptdf, qt, model, result, quantile_seconds, n_quantiles, solve_seconds


def _quantile_csv(case, qt, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "kind", "branch", "quantile_mw"])
        for t in range(case.horizon):
            writer.writerow([t + 1, "reserve_up", "", qt.reserve_up[t]])
            writer.writerow([t + 1, "reserve_down", "", qt.reserve_down[t]])
            for l in range(len(case.network.branches)):
                writer.writerow([t + 1, "line_forward", l, qt.line_forward[l, t]])
                writer.writerow([t + 1, "line_reverse", l, qt.line_reverse[l, t]])


def cmd_solve(args) -> int:
    case = load_case(args.case)
    gmms = _load_gmms(case, args.gmm)
    ptdf, qt, model, result, t_q, n_q, t_s = _solve_pipeline(case, gmms, args)
    print(f"quantile phase: {t_q * 1e3:.3f} ms total, "
          f"{t_q / n_q * 1e6:.1f} us per constraint ({n_q} chance constraints)")
    qt_path = args.quantile_csv or str(args.out) + ".quantiles.csv"
    _quantile_csv(case, qt, qt_path)
    print(f"quantile table -> {qt_path}")
    if result is None:
        return EXIT_OK
    print(f"miqp solve: {t_s:.3f} s, {result.nodes_explored} nodes, status {result.status}")
    if result.status == "infeasible":
        print("model infeasible: a relaxation was certified infeasible "
              "(Farkas ray from the homogeneous embedding); "
              "consider enabling curtailment or relaxing line limits")
        return EXIT_INFEASIBLE
    if result.status not in ("optimal", "gap_reached"):
        print(f"solve stopped early: {result.status}")
        return EXIT_INTERNAL
    schedule = extract_schedule(case, model, result.assignment)
    doc = {
        "case": case.name,
        "status": result.status,
        "objective": result.objective,
        "best_bound": result.best_bound,
        "nodes_explored": result.nodes_explored,
        "schedule": schedule.to_dict(),
    }
    Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    _write_manifest(args.out, "solve", args, extra={"objective": result.objective})
    c = schedule.costs
    print(f"objective {result.objective:.4f} "
          f"(uc {c.uc:.2f}, fuel {c.fuel:.2f}, reserve {c.reserve:.2f}, "
          f"curtailment penalty {c.curtail_penalty:.2f})")
    print(f"schedule -> {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    case = load_case(args.case)
    gmms = _load_gmms(case, args.gmm)
    doc = json.loads(Path(args.schedule).read_text())
    schedule = UcSchedule.from_dict(doc["schedule"] if "schedule" in doc else doc)
    ptdf = compute_ptdf(case.network)
    report = validate_schedule(
        case, ptdf, schedule, gmms, n_samples=args.samples, seed=args.seed
    )
    emit_report_csv(report, args.out)
    _write_manifest(args.out, "validate", args)
    worst_up = float(np.max(report.reserve_up))
    worst_line = float(
        max(np.max(report.line_forward, initial=0.0), np.max(report.line_reverse, initial=0.0))
    )
    print(f"validated {report.sample_count} samples/period over {case.horizon} periods")
    print(f"worst reserve-up violation {worst_up:.5f}, worst line violation {worst_line:.5f}")
    print(f"report -> {args.out}")
    return EXIT_OK


def cmd_sweep_correlation(args) -> int:
    case = load_case(args.case)
    if case.uncertainty.intervals is None or case.uncertainty.sweep_pairs is None:
        raise CaseFileError(
            "/uncertainty", "sweep needs inline intervals and a sweep_pairs declaration"
        )
    r_values = [float(tok) for tok in args.r_values.split(",")]
    rows = []
    for r in r_values:
        intervals = []
        try:
            for iv in case.uncertainty.intervals:
                mat = iv.correlation.matrix.copy()
                for i, j in case.uncertainty.sweep_pairs:
                    mat[i, j] = mat[j, i] = r
                intervals.append(IntervalUncertainty(iv.marginals, CorrelationSpec(mat)))
        except ValueError as exc:
            print(f"r={r}: skipped, correlation not usable ({exc})")
            continue
        gmms = fit_interval_gmms(intervals, args.samples, args.components, args.seed)
        ptdf = compute_ptdf(case.network)
        qt = build_quantile_table(case, gmms, ptdf)
        model = build_miqp(case, ptdf, qt)
        result = branch_and_bound(model, SolveConfig(relative_mip_gap=args.gap))
        if result.status not in ("optimal", "gap_reached"):
            print(f"r={r}: solve status {result.status}, skipped")
            continue
        rows.append((r, result.objective))
        print(f"r={r:+.2f}: total cost {result.objective:.2f}")
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["r", "total_cost"])
        writer.writerows(rows)
    _write_manifest(args.out, "sweep-correlation", args)
    print(f"sweep -> {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="windcommit",
                     description="chance-constrained unit commitment toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("fit", help="fit per-interval mixtures from case marginals")
    p.add_argument("case")
    p.add_argument("out", help="output mixture parameter file (JSON)")
    p.add_argument("--components", type=int, default=10)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("solve", help="build and solve the deterministic MIQP")
    p.add_argument("case")
    p.add_argument("out", help="output schedule file (JSON)")
    p.add_argument("--gmm", help="mixture parameter file (defaults to the case's gmm_file)")
    p.add_argument("--gap", type=float, default=0.01)
    p.add_argument("--export-mps", help="also write the model in MPS format")
    p.add_argument("--no-solve", action="store_true", help="stop after model build/export")
    p.add_argument("--no-curtailment", action="store_true",
                   help="fix curtailment variables to zero")
    p.add_argument("--no-line-constraints", action="store_true",
                   help="drop branch-flow chance constraints")
    p.add_argument("--quantile-csv", help="dump the quantile table for inspection")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="Monte Carlo validation of a schedule")
    p.add_argument("case")
    p.add_argument("schedule")
    p.add_argument("out", help="output CSV report")
    p.add_argument("--gmm")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep-correlation",
                       help="refit and solve across correlation coefficients")
    p.add_argument("case")
    p.add_argument("out", help="output CSV (r, total_cost)")
    p.add_argument("--r-values", default="-0.4,-0.2,0.0,0.2,0.4")
    p.add_argument("--gap", type=float, default=1e-4)
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sweep_correlation)

    return parser


def main(argv=None) -> int:
    global _run_started_at
    _run_started_at = datetime.now(timezone.utc).isoformat()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CaseFileError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
