"""Power-system data model, case-file ingestion and DC PTDF computation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fitting import CorrelationSpec, MarginalHistogram


class CaseFileError(ValueError):
    """Schema or invariant failure in a case file, with a JSON-pointer location."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance: float  # per unit
    capacity: float  # MW
    alpha_forward: float | None = None  # overrides the case-wide level
    alpha_reverse: float | None = None


@dataclass(frozen=True)
class Network:
    buses: tuple[int, ...]
    slack_bus: int
    branches: tuple[Branch, ...]


@dataclass(frozen=True)
class InitialState:
    on: bool
    power: float  # MW at t=0
    periods_in_state: int


@dataclass(frozen=True)
class Generator:
    name: str
    bus: int
    pmin: float
    pmax: float
    cost_quad: float  # $/MW^2 h
    cost_lin: float  # $/MWh
    cost_const: float  # $/h
    startup_cost: float
    shutdown_cost: float
    reserve_up_cost: float  # $/MWh
    reserve_down_cost: float
    reserve_up_max: float  # MW
    reserve_down_max: float
    ramp_up: float  # MW per interval
    ramp_down: float
    min_up: int  # intervals
    min_down: int
    initial: InitialState


@dataclass(frozen=True)
class WindFarm:
    name: str
    bus: int
    capacity: float
    forecast: np.ndarray  # MW, length T


@dataclass(frozen=True)
class Load:
    bus: int
    demand: np.ndarray  # MW, length T


@dataclass(frozen=True)
class RiskParams:
    alpha_reserve_up: float
    alpha_reserve_down: float
    alpha_line_forward: float
    alpha_line_reverse: float
    reserve_up_extra: float  # MW margin for non-wind uncertainty
    reserve_down_extra: float
    curtailment_penalty: float  # $/MW^2 h


@dataclass(frozen=True)
class IntervalUncertainty:
    marginals: tuple[MarginalHistogram, ...]  # one per wind farm
    correlation: CorrelationSpec


@dataclass(frozen=True)
class CaseUncertainty:
    intervals: tuple[IntervalUncertainty, ...] | None
    gmm_file: str | None  # resolved absolute path to a prefitted parameter file
    sweep_pairs: tuple[tuple[int, int], ...] | None  # correlation entries a sweep replaces


@dataclass(frozen=True)
class Case:
    name: str
    horizon: int
    network: Network
    generators: tuple[Generator, ...]
    wind_farms: tuple[WindFarm, ...]
    loads: tuple[Load, ...]
    risk: RiskParams
    uncertainty: CaseUncertainty
    path: str | None = None


@dataclass(frozen=True)
class PtdfMatrix:
    """Branch-by-bus DC injection sensitivities; the slack column is zero."""

    matrix: np.ndarray  # (n_branches, n_buses)
    buses: tuple[int, ...]
    slack_bus: int

    @property
    def bus_index(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.buses)}


def _expect(doc, key, kind, location):
    if key not in doc:
        raise CaseFileError(f"{location}/{key}", "missing required field")
    val = doc[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind is bool and isinstance(val, bool):
        return val
    if kind in (list, dict, str) and isinstance(val, kind):
        return val
    raise CaseFileError(f"{location}/{key}", f"expected {kind.__name__}, got {type(val).__name__}")


def _vector(doc, key, length, location):
    raw = _expect(doc, key, list, location)
    if len(raw) != length:
        raise CaseFileError(f"{location}/{key}", f"expected length {length}, got {len(raw)}")
    try:
        return np.asarray([float(v) for v in raw])
    except (TypeError, ValueError):
        raise CaseFileError(f"{location}/{key}", "entries must be numbers") from None


def _check_connected(buses, branches):
    adjacency: dict[int, set[int]] = {b: set() for b in buses}
    for br in branches:
        adjacency[br.from_bus].add(br.to_bus)
        adjacency[br.to_bus].add(br.from_bus)
    seen = {buses[0]}
    stack = [buses[0]]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return [b for b in buses if b not in seen]


def _parse_network(doc, location="/network") -> Network:
    buses = _expect(doc, "buses", list, location)
    if not buses or len(set(buses)) != len(buses):
        raise CaseFileError(f"{location}/buses", "bus ids must be nonempty and unique")
    slack = _expect(doc, "slack_bus", int, location)
    if slack not in buses:
        raise CaseFileError(f"{location}/slack_bus", f"slack bus {slack} is not a declared bus")
    branches = []
    for i, raw in enumerate(_expect(doc, "branches", list, location)):
        loc = f"{location}/branches/{i}"
        fb = _expect(raw, "from_bus", int, loc)
        tb = _expect(raw, "to_bus", int, loc)
        for b in (fb, tb):
            if b not in buses:
                raise CaseFileError(loc, f"references undeclared bus {b}")
        x = _expect(raw, "reactance", float, loc)
        if x <= 0:
            raise CaseFileError(f"{loc}/reactance", f"must be positive, got {x}")
        cap = _expect(raw, "capacity", float, loc)
        if cap <= 0:
            raise CaseFileError(f"{loc}/capacity", f"must be positive, got {cap}")
        branches.append(
            Branch(
                fb,
                tb,
                x,
                cap,
                alpha_forward=raw.get("alpha_forward"),
                alpha_reverse=raw.get("alpha_reverse"),
            )
        )
    if not branches:
        raise CaseFileError(f"{location}/branches", "at least one branch is required")
    net = Network(tuple(buses), slack, tuple(branches))
    unreachable = _check_connected(net.buses, net.branches)
    if unreachable:
        raise CaseFileError(f"{location}/buses", f"buses {unreachable} are not connected")
    return net


def _parse_generator(raw, horizon, buses, location) -> Generator:
    name = _expect(raw, "name", str, location)
    bus = _expect(raw, "bus", int, location)
    if bus not in buses:
        raise CaseFileError(f"{location}/bus", f"references undeclared bus {bus}")
    pmin = _expect(raw, "pmin", float, location)
    pmax = _expect(raw, "pmax", float, location)
    if pmin > pmax:
        raise CaseFileError(location, f"generator {name}: pmin {pmin} > pmax {pmax} (residual {pmin - pmax})")
    a = _expect(raw, "cost_quad", float, location)
    if a < 0:
        raise CaseFileError(f"{location}/cost_quad", f"must be nonnegative for convexity, got {a}")
    ut = _expect(raw, "min_up", int, location)
    dt = _expect(raw, "min_down", int, location)
    if ut < 1 or dt < 1:
        raise CaseFileError(location, f"generator {name}: min_up/min_down must be >= 1")
    urmax = _expect(raw, "reserve_up_max", float, location)
    drmax = _expect(raw, "reserve_down_max", float, location)
    if urmax < 0 or drmax < 0:
        raise CaseFileError(location, f"generator {name}: reserve caps must be nonnegative")
    init_raw = _expect(raw, "initial", dict, location)
    init = InitialState(
        on=_expect(init_raw, "on", bool, f"{location}/initial"),
        power=_expect(init_raw, "power", float, f"{location}/initial"),
        periods_in_state=_expect(init_raw, "periods_in_state", int, f"{location}/initial"),
    )
    return Generator(
        name=name,
        bus=bus,
        pmin=pmin,
        pmax=pmax,
        cost_quad=a,
        cost_lin=_expect(raw, "cost_lin", float, location),
        cost_const=_expect(raw, "cost_const", float, location),
        startup_cost=_expect(raw, "startup_cost", float, location),
        shutdown_cost=_expect(raw, "shutdown_cost", float, location),
        reserve_up_cost=_expect(raw, "reserve_up_cost", float, location),
        reserve_down_cost=_expect(raw, "reserve_down_cost", float, location),
        reserve_up_max=urmax,
        reserve_down_max=drmax,
        ramp_up=_expect(raw, "ramp_up", float, location),
        ramp_down=_expect(raw, "ramp_down", float, location),
        min_up=ut,
        min_down=dt,
        initial=init,
    )


def _parse_risk(raw, location="/risk") -> RiskParams:
    alphas = {}
    for key in ("alpha_reserve_up", "alpha_reserve_down", "alpha_line_forward", "alpha_line_reverse"):
        val = _expect(raw, key, float, location)
        if not 0.0 < val < 0.5:
            raise CaseFileError(f"{location}/{key}", f"must lie in (0, 0.5), got {val}")
        alphas[key] = val
    extras = {}
    for key in ("reserve_up_extra", "reserve_down_extra", "curtailment_penalty"):
        val = _expect(raw, key, float, location)
        if val < 0:
            raise CaseFileError(f"{location}/{key}", f"must be nonnegative, got {val}")
        extras[key] = val
    return RiskParams(**alphas, **extras)


def _parse_uncertainty(raw, n_farms, horizon, base_dir, location="/uncertainty") -> CaseUncertainty:
    intervals = None
    if "intervals" in raw:
        docs = _expect(raw, "intervals", list, location)
        if len(docs) != horizon:
            raise CaseFileError(
                f"{location}/intervals", f"expected {horizon} interval entries, got {len(docs)}"
            )
        parsed = []
        for t, doc in enumerate(docs):
            loc = f"{location}/intervals/{t}"
            margs = _expect(doc, "marginals", list, loc)
            if len(margs) != n_farms:
                raise CaseFileError(
                    f"{loc}/marginals", f"expected {n_farms} marginals, got {len(margs)}"
                )
            hists = []
            for j, m in enumerate(margs):
                try:
                    hists.append(
                        MarginalHistogram(
                            np.asarray(m["bin_edges"], dtype=float),
                            np.asarray(m["bin_probabilities"], dtype=float),
                        )
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise CaseFileError(f"{loc}/marginals/{j}", str(exc)) from exc
            corr_raw = _expect(doc, "correlation", list, loc)
            try:
                corr = CorrelationSpec(np.asarray(corr_raw, dtype=float))
            except ValueError as exc:
                raise CaseFileError(f"{loc}/correlation", str(exc)) from exc
            if corr.dimension != n_farms:
                raise CaseFileError(
                    f"{loc}/correlation", f"dimension {corr.dimension} != {n_farms} wind farms"
                )
            parsed.append(IntervalUncertainty(tuple(hists), corr))
        intervals = tuple(parsed)
    gmm_file = raw.get("gmm_file")
    if gmm_file is not None:
        gmm_file = str((base_dir / gmm_file).resolve())
    sweep_pairs = None
    if "sweep_pairs" in raw:
        pairs = []
        for k, pair in enumerate(_expect(raw, "sweep_pairs", list, location)):
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or not all(isinstance(i, int) and 0 <= i < n_farms for i in pair)
                or pair[0] == pair[1]
            ):
                raise CaseFileError(
                    f"{location}/sweep_pairs/{k}",
                    f"expected a pair of distinct farm indices < {n_farms}",
                )
            pairs.append((pair[0], pair[1]))
        sweep_pairs = tuple(pairs)
    if intervals is None and gmm_file is None:
        raise CaseFileError(location, "needs either inline 'intervals' or a 'gmm_file' path")
    return CaseUncertainty(intervals, gmm_file, sweep_pairs)


def load_case(path) -> Case:
    """Parse and fully validate a case file; raises CaseFileError with a location."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise CaseFileError("/", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise CaseFileError("/", f"invalid JSON: {exc}") from exc

    horizon = _expect(doc, "horizon", int, "")
    if horizon < 1:
        raise CaseFileError("/horizon", f"must be at least 1, got {horizon}")
    network = _parse_network(_expect(doc, "network", dict, ""))

    generators = tuple(
        _parse_generator(raw, horizon, network.buses, f"/generators/{i}")
        for i, raw in enumerate(_expect(doc, "generators", list, ""))
    )
    if not generators:
        raise CaseFileError("/generators", "at least one generator is required")

    farms = []
    for j, raw in enumerate(_expect(doc, "wind_farms", list, "")):
        loc = f"/wind_farms/{j}"
        bus = _expect(raw, "bus", int, loc)
        if bus not in network.buses:
            raise CaseFileError(f"{loc}/bus", f"references undeclared bus {bus}")
        capacity = _expect(raw, "capacity", float, loc)
        forecast = _vector(raw, "forecast", horizon, loc)
        if np.any(forecast < 0) or np.any(forecast > capacity):
            bad = int(np.argmax((forecast < 0) | (forecast > capacity)))
            raise CaseFileError(
                f"{loc}/forecast",
                f"entry {bad} = {forecast[bad]} outside [0, capacity={capacity}]",
            )
        farms.append(WindFarm(_expect(raw, "name", str, loc), bus, capacity, forecast))

    loads = []
    for k, raw in enumerate(_expect(doc, "loads", list, "")):
        loc = f"/loads/{k}"
        bus = _expect(raw, "bus", int, loc)
        if bus not in network.buses:
            raise CaseFileError(f"{loc}/bus", f"references undeclared bus {bus}")
        demand = _vector(raw, "demand", horizon, loc)
        if np.any(demand < 0):
            raise CaseFileError(f"{loc}/demand", "demand must be nonnegative")
        loads.append(Load(bus, demand))
    if not loads:
        raise CaseFileError("/loads", "at least one load is required")

    risk = _parse_risk(_expect(doc, "risk", dict, ""))
    for i, br in enumerate(network.branches):
        for key, val in (("alpha_forward", br.alpha_forward), ("alpha_reverse", br.alpha_reverse)):
            if val is not None and not 0.0 < val < 0.5:
                raise CaseFileError(f"/network/branches/{i}/{key}", f"must lie in (0, 0.5), got {val}")

    uncertainty = _parse_uncertainty(
        _expect(doc, "uncertainty", dict, ""), len(farms), horizon, path.parent
    )

    return Case(
        name=doc.get("name", path.stem),
        horizon=horizon,
        network=network,
        generators=generators,
        wind_farms=tuple(farms),
        loads=tuple(loads),
        risk=risk,
        uncertainty=uncertainty,
        path=str(path),
    )


def compute_ptdf(net: Network) -> PtdfMatrix:
    """DC power transfer distribution factors via the reduced susceptance matrix.

    Builds the branch-bus incidence A and diagonal susceptance 1/x, forms the
    nodal matrix B = A' diag(1/x) A, removes the slack row/column, and solves
    diag(1/x) A_red B_red^{-1}; the slack column is reinserted as zeros.
    """
    buses = list(net.buses)
    bus_pos = {b: i for i, b in enumerate(buses)}
    n_bus, n_br = len(buses), len(net.branches)
    incidence = np.zeros((n_br, n_bus))
    susceptance = np.zeros(n_br)
    for i, br in enumerate(net.branches):
        incidence[i, bus_pos[br.from_bus]] = 1.0
        incidence[i, bus_pos[br.to_bus]] = -1.0
        susceptance[i] = 1.0 / br.reactance
    b_nodal = incidence.T @ (susceptance[:, None] * incidence)
    slack_pos = bus_pos[net.slack_bus]
    keep = [i for i in range(n_bus) if i != slack_pos]
    b_red = b_nodal[np.ix_(keep, keep)]
    rhs = susceptance[:, None] * incidence[:, keep]
    try:
        reduced = np.linalg.solve(b_red, rhs.T).T
    except np.linalg.LinAlgError:
        raise ValueError("reduced susceptance matrix is singular (network not connected)") from None
    matrix = np.zeros((n_br, n_bus))
    matrix[:, keep] = reduced
    return PtdfMatrix(matrix=matrix, buses=tuple(buses), slack_bus=net.slack_bus)
