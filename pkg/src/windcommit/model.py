"""Mixed-integer quadratic program container shared by the builder and the solver.

The objective convention is sum_v quad[v]*x_v^2 + sum_v lin[v]*x_v + constant
with every quadratic coefficient nonnegative (separable convex form).
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "continuous" | "binary"
    lower: float
    upper: float

    def __post_init__(self):
        if self.kind not in ("continuous", "binary"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == "binary" and (self.lower, self.upper) != (0.0, 1.0):
            raise ValueError(f"binary {self.name} must have bounds [0, 1]")
        if self.lower > self.upper:
            raise ValueError(f"{self.name}: lower bound {self.lower} > upper bound {self.upper}")


@dataclass(frozen=True)
class LinearConstraint:
    name: str
    coefficients: dict[str, float]
    sense: str  # "<=" | "=" | ">="
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", "=", ">="):
            raise ValueError(f"unknown sense {self.sense!r} in constraint {self.name}")


@dataclass(frozen=True)
class Objective:
    linear: dict[str, float] = field(default_factory=dict)
    quadratic_diagonal: dict[str, float] = field(default_factory=dict)
    constant: float = 0.0


class MiqpModel:
    """Variables, linear constraints and a separable convex quadratic objective."""

    def __init__(self, name: str = "miqp"):
        self.name = name
        self.variables: list[Variable] = []
        self.linear_constraints: list[LinearConstraint] = []
        self.objective = Objective()
        self._index: dict[str, int] = {}

    def add_variable(self, name, kind="continuous", lower=0.0, upper=float("inf")) -> str:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        if kind == "binary":
            lower, upper = 0.0, 1.0
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, kind, float(lower), float(upper)))
        return name

    def add_constraint(self, name, coefficients, sense, rhs) -> None:
        coefficients = {k: float(v) for k, v in coefficients.items() if v != 0.0}
        for var in coefficients:
            if var not in self._index:
                raise ValueError(f"constraint {name} references undeclared variable {var}")
        self.linear_constraints.append(LinearConstraint(name, coefficients, sense, float(rhs)))

    def set_objective(self, linear=None, quadratic_diagonal=None, constant=0.0) -> None:
        linear = {k: float(v) for k, v in (linear or {}).items() if v != 0.0}
        quad = {k: float(v) for k, v in (quadratic_diagonal or {}).items() if v != 0.0}
        for var in (*linear, *quad):
            if var not in self._index:
                raise ValueError(f"objective references undeclared variable {var}")
        for var, coef in quad.items():
            if coef < 0:
                raise ValueError(f"negative quadratic coefficient {coef} on {var} (nonconvex)")
        self.objective = Objective(linear, quad, float(constant))

    def variable_index(self, name: str) -> int:
        return self._index[name]

    @property
    def binary_names(self) -> list[str]:
        return [v.name for v in self.variables if v.kind == "binary"]

    def evaluate_objective(self, assignment: dict[str, float]) -> float:
        total = self.objective.constant
        for var, coef in self.objective.linear.items():
            total += coef * assignment[var]
        for var, coef in self.objective.quadratic_diagonal.items():
            total += coef * assignment[var] ** 2
        return total

    def constraint_violations(self, assignment: dict[str, float]) -> list[tuple[str, float]]:
        """(name, residual) for every constraint, residual > 0 meaning violated."""
        out = []
        for con in self.linear_constraints:
            body = sum(coef * assignment[var] for var, coef in con.coefficients.items())
            if con.sense == "<=":
                res = body - con.rhs
            elif con.sense == ">=":
                res = con.rhs - body
            else:
                res = abs(body - con.rhs)
            out.append((con.name, res))
        return out
