"""Deterministic equivalent of the chance-constrained unit commitment.

The reserve and line-flow chance constraints are replaced by linear
constraints whose right-hand sides are quantiles of the aggregated
forecast-error mixture: the all-ones projection for system reserve and the
wind-bus PTDF projection per branch. The quantile table depends only on the
mixtures, the network sensitivities and the risk levels, never on decision
variables, so it is computed once before the MIQP exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gmm import QuantileConfig, _batch_quantiles
from .grid import Case, PtdfMatrix
from .model import MiqpModel


@dataclass(frozen=True)
class QuantileTable:
    """Per-period reserve quantiles and per-branch flow quantiles (all MW)."""

    reserve_up: np.ndarray  # (T,)   Quant(alpha_UR | 1'e)
    reserve_down: np.ndarray  # (T,)   Quant(1 - alpha_DR | 1'e)
    line_forward: np.ndarray  # (L, T) Quant(1 - alpha_fwd | s'e)
    line_reverse: np.ndarray  # (L, T) Quant(alpha_rev | s'e)

    def __post_init__(self):
        if np.any(self.reserve_up > self.reserve_down + 1e-9):
            raise ValueError("reserve_up quantile exceeds reserve_down quantile")
        if np.any(self.line_reverse > self.line_forward + 1e-9):
            raise ValueError("line_reverse quantile exceeds line_forward quantile")


def build_quantile_table(
    case: Case,
    gmms,
    ptdf: PtdfMatrix,
    cfg: QuantileConfig | None = None,
) -> QuantileTable:
    """Solve the four quantiles per period (and per branch) from the error mixtures.

    Every entry is an independent univariate quantile solve; failures are
    re-raised with (period, branch) context.
    """
    gmms = list(gmms)
    n_farms = len(case.wind_farms)
    if len(gmms) != case.horizon:
        raise ValueError(f"expected {case.horizon} mixtures, got {len(gmms)}")
    for t, g in enumerate(gmms):
        if g.dimension != n_farms:
            raise ValueError(
                f"interval {t}: mixture dimension {g.dimension} != {n_farms} wind farms"
            )
    risk = case.risk
    bus_index = ptdf.bus_index
    farm_cols = [bus_index[f.bus] for f in case.wind_farms]
    branches = case.network.branches
    T, L = case.horizon, len(branches)

    # projection directions: all-ones for reserve, wind-bus PTDF row per branch
    directions = np.vstack([np.ones(n_farms), ptdf.matrix[:, farm_cols]])  # (1+L, nw)
    alpha_fwd = np.array(
        [br.alpha_forward if br.alpha_forward is not None else risk.alpha_line_forward
         for br in branches]
    )
    alpha_rev = np.array(
        [br.alpha_reverse if br.alpha_reverse is not None else risk.alpha_line_reverse
         for br in branches]
    )
    # per interval: 2 reserve levels then (fwd, rev) per branch
    levels = np.concatenate(
        [[risk.alpha_reserve_up, 1.0 - risk.alpha_reserve_down], 1.0 - alpha_fwd, alpha_rev]
    )
    per_t = levels.size

    # rectangular batch across intervals: zero-weight padding up to the
    # largest component count (padded rows contribute nothing)
    k_max = max(len(g.components) for g in gmms)
    order = np.concatenate([[0, 0], np.arange(1, L + 1), np.arange(1, L + 1)])
    batch_w, batch_m, batch_v, batch_q = [], [], [], []
    for t, g in enumerate(gmms):
        proj_m = g.means @ directions.T  # (K, 1+L)
        proj_v = np.einsum("li,kij,lj->kl", directions, g.covariances, directions)
        proj_v = np.maximum(proj_v, 0.0)
        k = len(g.components)
        w = np.zeros((per_t, k_max))
        m = np.zeros((per_t, k_max))
        v = np.ones((per_t, k_max))
        w[:, :k] = np.broadcast_to(g.weights[:, None], (k, per_t)).T
        m[:, :k] = proj_m[:, order].T
        v[:, :k] = proj_v[:, order].T
        batch_w.append(w)
        batch_m.append(m)
        batch_v.append(v)
        batch_q.append(levels)
    try:
        solved = _batch_quantiles(
            np.concatenate(batch_w),
            np.concatenate(batch_m),
            np.concatenate(batch_v),
            np.concatenate(batch_q),
            cfg,
        )
    except (ValueError, RuntimeError) as exc:
        raise RuntimeError(f"quantile transformation failed: {exc}") from exc
    solved = solved.reshape(T, per_t)
    q_up = solved[:, 0].copy()
    q_dn = solved[:, 1].copy()
    q_fwd = solved[:, 2 : 2 + L].T.copy()
    q_rev = solved[:, 2 + L :].T.copy()
    return QuantileTable(q_up, q_dn, q_fwd, q_rev)


def _line_sensitivities(case: Case, ptdf: PtdfMatrix):
    """Per-branch injection sensitivities for generators/farms and the fixed
    demand term (loads enter as withdrawals, hence the sign flip)."""
    bus_index = ptdf.bus_index
    gen_s = np.array([[ptdf.matrix[l, bus_index[g.bus]] for g in case.generators]
                      for l in range(len(case.network.branches))])
    farm_s = np.array([[ptdf.matrix[l, bus_index[f.bus]] for f in case.wind_farms]
                       for l in range(len(case.network.branches))])
    demand = np.stack([ld.demand for ld in case.loads])  # (n_loads, T)
    load_s = np.array([[-ptdf.matrix[l, bus_index[ld.bus]] for ld in case.loads]
                       for l in range(len(case.network.branches))])
    demand_term = load_s @ demand  # (L, T)
    return gen_s, farm_s, demand_term


def build_miqp(
    case: Case,
    ptdf: PtdfMatrix,
    qt: QuantileTable,
    allow_curtailment: bool = True,
    include_line_constraints: bool = True,
) -> MiqpModel:
    """Assemble the deterministic MIQP with a fixed variable/constraint order.

    Scheduled wind is substituted out via forecast minus curtailment, startup
    and shutdown costs are linearized with nonnegative auxiliaries (exact
    under minimization), ramping uses a per-generator big-M equal to the unit
    capacity, and the reserve/line rows carry the quantile table on the
    right-hand side.
    """
    T = case.horizon
    model = MiqpModel(case.name)
    risk = case.risk
    forecast = np.stack([f.forecast for f in case.wind_farms])  # (nw, T)
    total_demand = np.sum([ld.demand for ld in case.loads], axis=0)  # (T,)

    def v(g, t):
        return f"v_{g.name}_{t}"

    def p(g, t):
        return f"p_{g.name}_{t}"

    linear: dict[str, float] = {}
    quad: dict[str, float] = {}
    for t in range(1, T + 1):
        for g in case.generators:
            model.add_variable(v(g, t), kind="binary")
            model.add_variable(p(g, t), lower=0.0, upper=g.pmax)
            model.add_variable(f"ur_{g.name}_{t}", lower=0.0, upper=g.reserve_up_max)
            model.add_variable(f"dr_{g.name}_{t}", lower=0.0, upper=g.reserve_down_max)
            model.add_variable(f"su_{g.name}_{t}", lower=0.0, upper=max(g.startup_cost, 0.0))
            model.add_variable(f"sd_{g.name}_{t}", lower=0.0, upper=max(g.shutdown_cost, 0.0))
            linear[v(g, t)] = g.cost_const
            linear[p(g, t)] = g.cost_lin
            linear[f"ur_{g.name}_{t}"] = g.reserve_up_cost
            linear[f"dr_{g.name}_{t}"] = g.reserve_down_cost
            linear[f"su_{g.name}_{t}"] = 1.0
            linear[f"sd_{g.name}_{t}"] = 1.0
            if g.cost_quad:
                quad[p(g, t)] = g.cost_quad
        for j, f in enumerate(case.wind_farms):
            cap = float(forecast[j, t - 1]) if allow_curtailment else 0.0
            model.add_variable(f"wcur_{f.name}_{t}", lower=0.0, upper=cap)
            if risk.curtailment_penalty:
                quad[f"wcur_{f.name}_{t}"] = risk.curtailment_penalty
    model.set_objective(linear=linear, quadratic_diagonal=quad)

    for t in range(1, T + 1):
        for g in case.generators:
            su, sd = g.startup_cost, g.shutdown_cost
            if t == 1:
                v0 = 1.0 if g.initial.on else 0.0
                model.add_constraint(
                    f"startup_{g.name}_{t}",
                    {f"su_{g.name}_{t}": 1.0, v(g, t): -su},
                    ">=",
                    -su * v0,
                )
                model.add_constraint(
                    f"shutdown_{g.name}_{t}",
                    {f"sd_{g.name}_{t}": 1.0, v(g, t): sd},
                    ">=",
                    sd * v0,
                )
            else:
                model.add_constraint(
                    f"startup_{g.name}_{t}",
                    {f"su_{g.name}_{t}": 1.0, v(g, t): -su, v(g, t - 1): su},
                    ">=",
                    0.0,
                )
                model.add_constraint(
                    f"shutdown_{g.name}_{t}",
                    {f"sd_{g.name}_{t}": 1.0, v(g, t): sd, v(g, t - 1): -sd},
                    ">=",
                    0.0,
                )

        balance = {p(g, t): 1.0 for g in case.generators}
        for f in case.wind_farms:
            balance[f"wcur_{f.name}_{t}"] = -1.0
        rhs = float(total_demand[t - 1] - forecast[:, t - 1].sum())
        model.add_constraint(f"balance_{t}", balance, "=", rhs)

        for g in case.generators:
            model.add_constraint(
                f"maxout_{g.name}_{t}",
                {p(g, t): 1.0, f"ur_{g.name}_{t}": 1.0, v(g, t): -g.pmax},
                "<=",
                0.0,
            )
            model.add_constraint(
                f"minout_{g.name}_{t}",
                {v(g, t): g.pmin, p(g, t): -1.0, f"dr_{g.name}_{t}": 1.0},
                "<=",
                0.0,
            )
            big_m = g.pmax
            if t == 1:
                v0 = 1.0 if g.initial.on else 0.0
                p0 = g.initial.power
                model.add_constraint(
                    f"rampup_{g.name}_{t}",
                    {p(g, t): 1.0, v(g, t): big_m},
                    "<=",
                    g.ramp_up + (2.0 - v0) * big_m + p0,
                )
                model.add_constraint(
                    f"rampdn_{g.name}_{t}",
                    {p(g, t): -1.0, v(g, t): big_m},
                    "<=",
                    g.ramp_down + (2.0 - v0) * big_m - p0,
                )
            else:
                model.add_constraint(
                    f"rampup_{g.name}_{t}",
                    {p(g, t): 1.0, p(g, t - 1): -1.0, v(g, t): big_m, v(g, t - 1): big_m},
                    "<=",
                    g.ramp_up + 2.0 * big_m,
                )
                model.add_constraint(
                    f"rampdn_{g.name}_{t}",
                    {p(g, t - 1): 1.0, p(g, t): -1.0, v(g, t): big_m, v(g, t - 1): big_m},
                    "<=",
                    g.ramp_down + 2.0 * big_m,
                )

        model.add_constraint(
            f"reserve_up_{t}",
            {f"ur_{g.name}_{t}": 1.0 for g in case.generators},
            ">=",
            risk.reserve_up_extra - qt.reserve_up[t - 1],
        )
        model.add_constraint(
            f"reserve_dn_{t}",
            {f"dr_{g.name}_{t}": 1.0 for g in case.generators},
            ">=",
            risk.reserve_down_extra + qt.reserve_down[t - 1],
        )

    if include_line_constraints:
        gen_s, farm_s, demand_term = _line_sensitivities(case, ptdf)
        for l, br in enumerate(case.network.branches):
            for t in range(1, T + 1):
                coeffs = {}
                for i, g in enumerate(case.generators):
                    if gen_s[l, i]:
                        coeffs[p(g, t)] = gen_s[l, i]
                for j, f in enumerate(case.wind_farms):
                    if farm_s[l, j]:
                        coeffs[f"wcur_{f.name}_{t}"] = -farm_s[l, j]
                const = float(farm_s[l] @ forecast[:, t - 1] + demand_term[l, t - 1])
                model.add_constraint(
                    f"line_fwd_{l}_{t}",
                    dict(coeffs),
                    "<=",
                    br.capacity - qt.line_forward[l, t - 1] - const,
                )
                model.add_constraint(
                    f"line_rev_{l}_{t}",
                    dict(coeffs),
                    ">=",
                    -br.capacity - qt.line_reverse[l, t - 1] - const,
                )

    for g in case.generators:
        ut, dt = g.min_up, g.min_down
        v0 = 1.0 if g.initial.on else 0.0
        # minimum-up rows
        for t in range(1, T - ut + 2):
            coeffs = {v(g, k): 1.0 for k in range(t, t + ut)}
            coeffs[v(g, t)] = coeffs.get(v(g, t), 0.0) - float(ut)
            rhs = 0.0
            if t == 1:
                rhs = -float(ut) * v0
            else:
                coeffs[v(g, t - 1)] = coeffs.get(v(g, t - 1), 0.0) + float(ut)
            model.add_constraint(f"minup_{g.name}_{t}", coeffs, ">=", rhs)
        for t in range(max(1, T - ut + 2), T + 1):
            window = float(T - t + 1)
            coeffs = {v(g, k): 1.0 for k in range(t, T + 1)}
            coeffs[v(g, t)] = coeffs.get(v(g, t), 0.0) - window
            rhs = 0.0
            if t == 1:
                rhs = -window * v0
            else:
                coeffs[v(g, t - 1)] = coeffs.get(v(g, t - 1), 0.0) + window
            model.add_constraint(f"minup_tail_{g.name}_{t}", coeffs, ">=", rhs)
        # minimum-down rows
        for t in range(1, T - dt + 2):
            coeffs = {v(g, k): -1.0 for k in range(t, t + dt)}
            coeffs[v(g, t)] = coeffs.get(v(g, t), 0.0) + float(dt)
            rhs = -float(dt)
            if t == 1:
                rhs += float(dt) * v0
            else:
                coeffs[v(g, t - 1)] = coeffs.get(v(g, t - 1), 0.0) - float(dt)
            model.add_constraint(f"mindn_{g.name}_{t}", coeffs, ">=", rhs)
        for t in range(max(1, T - dt + 2), T + 1):
            window = float(T - t + 1)
            coeffs = {v(g, k): -1.0 for k in range(t, T + 1)}
            coeffs[v(g, t)] = coeffs.get(v(g, t), 0.0) + window
            rhs = -window
            if t == 1:
                rhs += window * v0
            else:
                coeffs[v(g, t - 1)] = coeffs.get(v(g, t - 1), 0.0) - window
            model.add_constraint(f"mindn_tail_{g.name}_{t}", coeffs, ">=", rhs)
        # remaining obligation carried in from before the horizon
        elapsed = g.initial.periods_in_state
        if g.initial.on and elapsed < ut:
            for t in range(1, min(ut - elapsed, T) + 1):
                model.add_constraint(f"initmust_on_{g.name}_{t}", {v(g, t): 1.0}, "=", 1.0)
        if not g.initial.on and elapsed < dt:
            for t in range(1, min(dt - elapsed, T) + 1):
                model.add_constraint(f"initmust_off_{g.name}_{t}", {v(g, t): 1.0}, "=", 0.0)

    return model


@dataclass(frozen=True)
class CostBreakdown:
    uc: float
    fuel: float
    reserve: float
    curtail_penalty: float
    total: float


@dataclass(frozen=True)
class UcSchedule:
    """Commitment, dispatch, reserves and wind schedule with the cost split."""

    generator_names: tuple[str, ...]
    wind_farm_names: tuple[str, ...]
    commitment: np.ndarray  # (ng, T) of 0/1
    power: np.ndarray  # (ng, T) MW
    reserve_up: np.ndarray  # (ng, T) MW
    reserve_down: np.ndarray  # (ng, T) MW
    wind_scheduled: np.ndarray  # (nw, T) MW
    wind_curtailed: np.ndarray  # (nw, T) MW
    costs: CostBreakdown

    def to_dict(self) -> dict:
        return {
            "generators": list(self.generator_names),
            "wind_farms": list(self.wind_farm_names),
            "commitment": self.commitment.astype(int).tolist(),
            "power": self.power.tolist(),
            "reserve_up": self.reserve_up.tolist(),
            "reserve_down": self.reserve_down.tolist(),
            "wind_scheduled": self.wind_scheduled.tolist(),
            "wind_curtailed": self.wind_curtailed.tolist(),
            "costs": {
                "uc": self.costs.uc,
                "fuel": self.costs.fuel,
                "reserve": self.costs.reserve,
                "curtail_penalty": self.costs.curtail_penalty,
                "total": self.costs.total,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "UcSchedule":
        costs = doc["costs"]
        return cls(
            generator_names=tuple(doc["generators"]),
            wind_farm_names=tuple(doc["wind_farms"]),
            commitment=np.asarray(doc["commitment"], dtype=float),
            power=np.asarray(doc["power"], dtype=float),
            reserve_up=np.asarray(doc["reserve_up"], dtype=float),
            reserve_down=np.asarray(doc["reserve_down"], dtype=float),
            wind_scheduled=np.asarray(doc["wind_scheduled"], dtype=float),
            wind_curtailed=np.asarray(doc["wind_curtailed"], dtype=float),
            costs=CostBreakdown(
                costs["uc"], costs["fuel"], costs["reserve"], costs["curtail_penalty"], costs["total"]
            ),
        )


def schedule_costs(case: Case, commitment, power, reserve_up, reserve_down, curtailed) -> CostBreakdown:
    """Recompute the four cost terms directly from the schedule arrays."""
    uc = fuel = reserve = 0.0
    for i, g in enumerate(case.generators):
        prev = 1.0 if g.initial.on else 0.0
        for t in range(case.horizon):
            dv = commitment[i, t] - prev
            uc += max(g.startup_cost * dv, 0.0) + max(-g.shutdown_cost * dv, 0.0)
            fuel += (
                g.cost_quad * power[i, t] ** 2
                + g.cost_lin * power[i, t]
                + g.cost_const * commitment[i, t]
            )
            reserve += g.reserve_up_cost * reserve_up[i, t] + g.reserve_down_cost * reserve_down[i, t]
            prev = commitment[i, t]
    curtail = float(case.risk.curtailment_penalty * np.sum(np.square(curtailed)))
    total = uc + fuel + reserve + curtail
    return CostBreakdown(uc, fuel, reserve, curtail, total)


def extract_schedule(case: Case, model: MiqpModel, solution: dict[str, float],
                     tolerance: float = 1e-6) -> UcSchedule:
    """Turn a solver assignment into a UcSchedule after checking it is feasible.

    The cost breakdown is recomputed from the schedule itself and must agree
    with the model objective evaluated at the assignment within 1e-4 relative.
    """
    worst_name, worst_res = None, 0.0
    for name, residual in model.constraint_violations(solution):
        if residual > worst_res:
            worst_name, worst_res = name, residual
    if worst_res > tolerance:
        raise ValueError(
            f"assignment violates constraint {worst_name} by {worst_res:.6g} MW"
        )
    for var in model.variables:
        val = solution[var.name]
        if val < var.lower - tolerance or val > var.upper + tolerance:
            raise ValueError(
                f"assignment puts {var.name}={val:.6g} outside [{var.lower}, {var.upper}]"
            )

    T = case.horizon
    ng, nw = len(case.generators), len(case.wind_farms)
    commitment = np.empty((ng, T))
    power = np.empty((ng, T))
    r_up = np.empty((ng, T))
    r_dn = np.empty((ng, T))
    curtailed = np.empty((nw, T))
    for i, g in enumerate(case.generators):
        for t in range(1, T + 1):
            commitment[i, t - 1] = round(solution[f"v_{g.name}_{t}"])
            power[i, t - 1] = solution[f"p_{g.name}_{t}"]
            r_up[i, t - 1] = solution[f"ur_{g.name}_{t}"]
            r_dn[i, t - 1] = solution[f"dr_{g.name}_{t}"]
    for j, f in enumerate(case.wind_farms):
        for t in range(1, T + 1):
            curtailed[j, t - 1] = solution[f"wcur_{f.name}_{t}"]
    forecast = np.stack([f.forecast for f in case.wind_farms])
    scheduled = forecast - curtailed

    costs = schedule_costs(case, commitment, power, r_up, r_dn, curtailed)
    model_obj = model.evaluate_objective(solution)
    if abs(costs.total - model_obj) > 1e-4 * max(1.0, abs(model_obj)):
        raise RuntimeError(
            f"recomputed cost {costs.total:.6f} disagrees with model objective "
            f"{model_obj:.6f} beyond 1e-4 relative"
        )
    return UcSchedule(
        generator_names=tuple(g.name for g in case.generators),
        wind_farm_names=tuple(f.name for f in case.wind_farms),
        commitment=commitment,
        power=power,
        reserve_up=r_up,
        reserve_down=r_dn,
        wind_scheduled=scheduled,
        wind_curtailed=curtailed,
        costs=costs,
    )
