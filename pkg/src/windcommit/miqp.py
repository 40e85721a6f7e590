"""Branch-and-bound MIQP solver over convex QP relaxations, plus MPS export.

Relaxations are solved with the Clarabel interior-point solver; KKT residuals
(scaled by the data norms) are re-checked against the configured tolerance and
primal infeasibility comes with Clarabel's homogeneous-embedding certificate.
The search itself is deterministic: best-first on the relaxation bound,
branching on the most fractional binary with lowest-index tie-breaking.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import clarabel
import numpy as np
from scipy import sparse

from .model import MiqpModel

_INTEGRALITY_TOL = 1e-6


@dataclass(frozen=True)
class SolveConfig:
    relative_mip_gap: float = 0.01
    absolute_gap: float = 1e-6
    node_limit: int = 10**6
    time_limit: float | None = None
    qp_kkt_tolerance: float = 1e-7
    verbose: bool = False

    def __post_init__(self):
        if self.relative_mip_gap < 0 or self.absolute_gap < 0:
            raise ValueError("gaps must be nonnegative")


@dataclass(frozen=True)
class RelaxationResult:
    status: str  # "optimal" | "infeasible"
    assignment: dict[str, float] | None
    objective: float | None
    kkt_residual: float | None = None
    farkas_ray_norm: float | None = None


@dataclass(frozen=True)
class SolveResult:
    status: str  # optimal | gap_reached | infeasible | node_limit | time_limit
    assignment: dict[str, float] | None
    objective: float | None
    best_bound: float | None
    nodes_explored: int


class _CompiledModel:
    """Static Clarabel data for one model; fixings only edit the rhs vector."""

    def __init__(self, model: MiqpModel, kkt_tolerance: float):
        self.model = model
        self.names = [v.name for v in model.variables]
        self.index = {n: i for i, n in enumerate(self.names)}
        n = len(self.names)
        self.n = n
        self.kkt_tolerance = kkt_tolerance

        quad = np.zeros(n)
        for name, coef in model.objective.quadratic_diagonal.items():
            if coef < 0:
                raise ValueError(f"negative quadratic coefficient on {name} (nonconvex model)")
            quad[self.index[name]] = coef
        self.p_mat = sparse.diags(2.0 * quad, format="csc")
        self.lin = np.zeros(n)
        for name, coef in model.objective.linear.items():
            self.lin[self.index[name]] = coef
        self.constant = model.objective.constant

        rows_eq, rows_ub = [], []
        for con in model.linear_constraints:
            items = [(self.index[v], c) for v, c in con.coefficients.items()]
            if con.sense == "=":
                rows_eq.append((items, con.rhs))
            elif con.sense == "<=":
                rows_ub.append((items, con.rhs))
            else:
                rows_ub.append(([(j, -c) for j, c in items], -con.rhs))

        self.lower = np.array([v.lower for v in model.variables])
        self.upper = np.array([v.upper for v in model.variables])
        self.ub_rows = [j for j in range(n) if math.isfinite(self.upper[j])]
        self.lb_rows = [j for j in range(n) if math.isfinite(self.lower[j])]

        data, rows, cols = [], [], []
        b = []
        r = 0
        for items, rhs in rows_eq:
            for j, c in items:
                rows.append(r)
                cols.append(j)
                data.append(c)
            b.append(rhs)
            r += 1
        self.m_eq = r
        for items, rhs in rows_ub:
            for j, c in items:
                rows.append(r)
                cols.append(j)
                data.append(c)
            b.append(rhs)
            r += 1
        self.ub_offset = r
        for j in self.ub_rows:
            rows.append(r)
            cols.append(j)
            data.append(1.0)
            b.append(self.upper[j])
            r += 1
        self.lb_offset = r
        for j in self.lb_rows:
            rows.append(r)
            cols.append(j)
            data.append(-1.0)
            b.append(-self.lower[j])
            r += 1
        self.a_mat = sparse.csc_matrix(
            (data, (rows, cols)), shape=(r, n), dtype=float
        )
        self.b_base = np.asarray(b, dtype=float)
        self.m_total = r
        self.cones = []
        if self.m_eq:
            self.cones.append(clarabel.ZeroConeT(self.m_eq))
        if self.m_total - self.m_eq:
            self.cones.append(clarabel.NonnegativeConeT(self.m_total - self.m_eq))
        self._ub_pos = {j: self.ub_offset + k for k, j in enumerate(self.ub_rows)}
        self._lb_pos = {j: self.lb_offset + k for k, j in enumerate(self.lb_rows)}

        self.settings = clarabel.DefaultSettings()
        self.settings.verbose = False
        tight = min(1e-8, 0.1 * kkt_tolerance)
        self.settings.tol_feas = tight
        self.settings.tol_gap_abs = tight
        self.settings.tol_gap_rel = tight

    def _rhs_with_fixings(self, fixings):
        b = self.b_base.copy()
        if fixings:
            for j, val in fixings.items():
                if j not in self._ub_pos or j not in self._lb_pos:
                    raise ValueError(
                        f"cannot fix variable {self.names[j]} without finite bounds"
                    )
                b[self._ub_pos[j]] = val
                b[self._lb_pos[j]] = -val
        return b

    def _kkt_residual(self, x, z, b):
        ax = self.a_mat @ x
        r_prim = 0.0
        if self.m_eq:
            r_prim = float(np.max(np.abs(ax[: self.m_eq] - b[: self.m_eq])))
        if self.m_total > self.m_eq:
            r_prim = max(r_prim, float(np.max(ax[self.m_eq :] - b[self.m_eq :], initial=0.0)))
        r_dual = float(
            np.max(np.abs(self.p_mat @ x + self.lin + self.a_mat.T @ z))
        )
        scale_p = 1.0 + float(np.max(np.abs(b), initial=0.0))
        scale_d = 1.0 + float(np.max(np.abs(self.lin), initial=0.0))
        return max(r_prim / scale_p, r_dual / scale_d)

    def solve(self, fixings=None) -> tuple[str, np.ndarray | None, float | None, float | None, float | None]:
        """Returns (status, x, objective, kkt_residual, farkas_norm)."""
        b = self._rhs_with_fixings(fixings)
        solver = clarabel.DefaultSolver(
            self.p_mat, self.lin, self.a_mat, b, self.cones, self.settings
        )
        sol = solver.solve()
        status = str(sol.status)
        if status in ("Solved", "AlmostSolved"):
            x = np.asarray(sol.x)
            z = np.asarray(sol.z)
            resid = self._kkt_residual(x, z, b)
            if resid > self.kkt_tolerance:
                raise RuntimeError(
                    f"relaxation KKT residual {resid:.3e} exceeds tolerance "
                    f"{self.kkt_tolerance:.1e} (clarabel status {status})"
                )
            obj = float(0.5 * x @ (self.p_mat @ x) + self.lin @ x + self.constant)
            return "optimal", x, obj, resid, None
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            ray = np.asarray(sol.z)
            return "infeasible", None, None, None, float(np.linalg.norm(ray, np.inf))
        if status == "DualInfeasible":
            raise RuntimeError("relaxation is unbounded below (dual infeasible)")
        raise RuntimeError(f"relaxation solve failed with clarabel status {status}")


def _named_fixings_to_indices(compiled, fixings):
    if not fixings:
        return None
    out = {}
    for name, val in fixings.items():
        if name not in compiled.index:
            raise ValueError(f"fixing references undeclared variable {name}")
        out[compiled.index[name]] = float(val)
    return out


def solve_relaxation(model: MiqpModel, fixings=None, kkt_tolerance=1e-7) -> RelaxationResult:
    """Solve the continuous relaxation (binaries in [0,1], fixings applied).

    Degenerates to an LP when the quadratic part is empty. Infeasibility is
    certified by Clarabel's homogeneous-embedding Farkas ray; its infinity
    norm is reported on the result.
    """
    compiled = _CompiledModel(model, kkt_tolerance)
    status, x, obj, resid, ray = compiled.solve(_named_fixings_to_indices(compiled, fixings))
    if status == "infeasible":
        return RelaxationResult("infeasible", None, None, farkas_ray_norm=ray)
    assignment = dict(zip(compiled.names, (float(v) for v in x)))
    return RelaxationResult("optimal", assignment, obj, kkt_residual=resid)


def _most_fractional(x, binary_indices):
    best_j, best_frac = None, _INTEGRALITY_TOL
    for j in binary_indices:
        frac = abs(x[j] - round(x[j]))
        if frac > best_frac + 1e-15:
            best_j, best_frac = j, frac
    return best_j


def branch_and_bound(model: MiqpModel, cfg: SolveConfig | None = None) -> SolveResult:
    """Best-first branch and bound on the convex relaxation bound.

    Deterministic given the model: node ties break on creation order and
    branching ties on the lowest variable index. Incumbents are polished by
    re-solving with all binaries fixed to their rounded values.
    """
    if cfg is None:
        cfg = SolveConfig()
    compiled = _CompiledModel(model, cfg.qp_kkt_tolerance)
    binary_indices = [compiled.index[name] for name in model.binary_names]
    started = time.monotonic()

    nodes_explored = 0
    counter = 0
    heap: list = []
    incumbent_x = None
    incumbent_obj = math.inf

    def make_assignment(x):
        vals = {}
        for name, j in compiled.index.items():
            v = float(x[j])
            if j in binary_set:
                snapped = round(v)
                if abs(v - snapped) > _INTEGRALITY_TOL:
                    raise RuntimeError(f"incumbent binary {name} not integral: {v}")
                v = float(snapped)
            vals[name] = v
        return vals

    binary_set = set(binary_indices)

    def consider(fixings):
        """Solve one node; push it, turn it into an incumbent, or drop it."""
        nonlocal nodes_explored, counter, incumbent_x, incumbent_obj
        nodes_explored += 1
        status, x, obj, _, _ = compiled.solve(fixings)
        if status == "infeasible":
            return
        if obj >= incumbent_obj - cfg.absolute_gap:
            return
        j = _most_fractional(x, binary_indices)
        if j is None:
            rounded = dict(fixings or {})
            for k in binary_indices:
                rounded[k] = float(round(x[k]))
            p_status, px, p_obj, _, _ = compiled.solve(rounded)
            if p_status != "optimal":
                return
            if p_obj < incumbent_obj:
                incumbent_obj = p_obj
                incumbent_x = px
                if cfg.verbose:
                    bound = heap[0][0] if heap else obj
                    gap = (incumbent_obj - bound) / max(1.0, abs(incumbent_obj))
                    print(
                        f"incumbent: nodes={nodes_explored} obj={incumbent_obj:.6f} "
                        f"bound={bound:.6f} gap={gap:.3e}"
                    )
            return
        counter += 1
        heapq.heappush(heap, (obj, counter, fixings or {}, x, j))

    consider(None)
    status = None
    best_bound = None

    while True:
        if not heap:
            if incumbent_x is None:
                return SolveResult("infeasible", None, None, None, nodes_explored)
            status, best_bound = "optimal", incumbent_obj
            break
        bound = heap[0][0]
        if incumbent_x is not None:
            if bound >= incumbent_obj - cfg.absolute_gap:
                status, best_bound = "optimal", bound
                break
            rel_gap = (incumbent_obj - bound) / max(1.0, abs(incumbent_obj))
            if cfg.relative_mip_gap > 0 and rel_gap <= cfg.relative_mip_gap:
                status, best_bound = "gap_reached", bound
                break
        if nodes_explored >= cfg.node_limit:
            status, best_bound = "node_limit", bound
            break
        if cfg.time_limit is not None and time.monotonic() - started > cfg.time_limit:
            status, best_bound = "time_limit", bound
            break
        _, _, fixings, x, j = heapq.heappop(heap)
        for val in (0.0, 1.0):
            child = dict(fixings)
            child[j] = val
            consider(child)

    assignment = make_assignment(incumbent_x) if incumbent_x is not None else None
    objective = incumbent_obj if incumbent_x is not None else None
    return SolveResult(status, assignment, objective, best_bound, nodes_explored)


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def export_mps(model: MiqpModel, path) -> None:
    """Write free-format MPS with a QUADOBJ section.

    QUADOBJ stores q such that the objective term is 0.5*q*x^2, i.e. twice the
    model's quadratic coefficient. Output is byte-stable across runs: fixed
    orderings, fixed number formatting.
    """
    lines = [f"NAME {model.name}", "ROWS", " N  OBJ"]
    sense_tag = {"<=": "L", ">=": "G", "=": "E"}
    for con in model.linear_constraints:
        lines.append(f" {sense_tag[con.sense]}  {con.name}")

    by_var: dict[str, list[tuple[str, float]]] = {v.name: [] for v in model.variables}
    for con in model.linear_constraints:
        for var, coef in con.coefficients.items():
            by_var[var].append((con.name, coef))

    lines.append("COLUMNS")
    in_integer = False
    marker = 0
    for var in model.variables:
        want_integer = var.kind == "binary"
        if want_integer and not in_integer:
            lines.append(f"    MARKER{marker}  'MARKER'  'INTORG'")
            marker += 1
            in_integer = True
        elif not want_integer and in_integer:
            lines.append(f"    MARKER{marker}  'MARKER'  'INTEND'")
            marker += 1
            in_integer = False
        obj_coef = model.objective.linear.get(var.name, 0.0)
        entries = [("OBJ", obj_coef)] if obj_coef != 0.0 else []
        entries.extend(by_var[var.name])
        if not entries:
            entries = [("OBJ", 0.0)]  # keep the column declared
        for row, coef in entries:
            lines.append(f"    {var.name}  {row}  {_fmt(coef)}")
    if in_integer:
        lines.append(f"    MARKER{marker}  'MARKER'  'INTEND'")

    lines.append("RHS")
    if model.objective.constant != 0.0:
        lines.append(f"    RHS  OBJ  {_fmt(-model.objective.constant)}")
    for con in model.linear_constraints:
        if con.rhs != 0.0:
            lines.append(f"    RHS  {con.name}  {_fmt(con.rhs)}")

    lines.append("BOUNDS")
    for var in model.variables:
        if var.kind == "binary":
            lines.append(f" BV BND  {var.name}")
            continue
        if var.lower == var.upper:
            lines.append(f" FX BND  {var.name}  {_fmt(var.lower)}")
            continue
        if math.isinf(var.lower) and math.isinf(var.upper):
            lines.append(f" FR BND  {var.name}")
            continue
        if math.isinf(var.lower):
            lines.append(f" MI BND  {var.name}")
        elif var.lower != 0.0:
            lines.append(f" LO BND  {var.name}  {_fmt(var.lower)}")
        if math.isfinite(var.upper):
            lines.append(f" UP BND  {var.name}  {_fmt(var.upper)}")

    quad = model.objective.quadratic_diagonal
    if quad:
        lines.append("QUADOBJ")
        for var in model.variables:
            if var.name in quad:
                lines.append(f"    {var.name}  {var.name}  {_fmt(2.0 * quad[var.name])}")
    lines.append("ENDATA")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_mps(path) -> MiqpModel:
    """Read the free-format MPS dialect written by export_mps."""
    model = MiqpModel()
    section = None
    senses: dict[str, str] = {}
    order: list[str] = []
    columns: dict[str, dict[str, float]] = {}
    obj_linear: dict[str, float] = {}
    rhs: dict[str, float] = {}
    obj_constant = 0.0
    kinds: dict[str, str] = {}
    bounds: dict[str, list[float]] = {}
    quad: dict[str, float] = {}
    in_integer = False
    var_order: list[str] = []

    with open(path) as f:
        for raw in f:
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            tokens = line.split()
            head = tokens[0].upper()
            is_header = not line[0].isspace() and head in (
                "NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "QUADOBJ", "RANGES", "ENDATA",
            )
            if is_header:
                if head == "NAME":
                    model.name = tokens[1] if len(tokens) > 1 else "miqp"
                section = head
                continue
            if section == "ROWS":
                tag, row = tokens[0].upper(), tokens[1]
                if tag == "N":
                    continue
                senses[row] = {"L": "<=", "G": ">=", "E": "="}[tag]
                order.append(row)
            elif section == "COLUMNS":
                if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                    in_integer = tokens[2] == "'INTORG'"
                    continue
                var = tokens[0]
                if var not in columns:
                    columns[var] = {}
                    kinds[var] = "binary" if in_integer else "continuous"
                    var_order.append(var)
                for row, coef in zip(tokens[1::2], tokens[2::2]):
                    if row == "OBJ":
                        obj_linear[var] = obj_linear.get(var, 0.0) + float(coef)
                    else:
                        columns[var][row] = float(coef)
            elif section == "RHS":
                for row, coef in zip(tokens[1::2], tokens[2::2]):
                    if row == "OBJ":
                        obj_constant = -float(coef)
                    else:
                        rhs[row] = float(coef)
            elif section == "BOUNDS":
                tag, _, var = tokens[0].upper(), tokens[1], tokens[2]
                entry = bounds.setdefault(var, [0.0, math.inf])
                if tag == "BV":
                    kinds[var] = "binary"
                    entry[0], entry[1] = 0.0, 1.0
                elif tag == "FX":
                    entry[0] = entry[1] = float(tokens[3])
                elif tag == "FR":
                    entry[0], entry[1] = -math.inf, math.inf
                elif tag == "MI":
                    entry[0] = -math.inf
                elif tag == "LO":
                    entry[0] = float(tokens[3])
                elif tag == "UP":
                    entry[1] = float(tokens[3])
                else:
                    raise ValueError(f"unsupported bound tag {tag}")
            elif section == "QUADOBJ":
                if tokens[0] != tokens[1]:
                    raise ValueError("only diagonal QUADOBJ entries are supported")
                quad[tokens[0]] = float(tokens[2]) / 2.0
            elif section == "RANGES":
                raise ValueError("RANGES section is not supported")

    for var in var_order:
        lo, up = bounds.get(var, [0.0, math.inf])
        model.add_variable(var, kinds[var], lo, up)
    for row in order:
        coefs = {
            var: coef for var, cols in columns.items() for r, coef in cols.items() if r == row
        }
        model.add_constraint(row, coefs, senses[row], rhs.get(row, 0.0))
    model.set_objective(obj_linear, quad, obj_constant)
    return model
