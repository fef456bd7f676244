"""Abstract MILP model container, solution record, and feasibility checking.

The model is a plain minimization MILP: variables with bounds and an
objective coefficient, plus sparse linear constraints.  Solvers (the
built-in simplex / branch-and-bound and external backends) consume this
representation; nothing here depends on a particular solver.
"""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
INTEGER = "integer"

LE = "<="
EQ = "=="
GE = ">="

CORE = "core"
USER_CUT = "user-cut"

INF = math.inf


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT = "TimeLimit"
    UNBOUNDED = "Unbounded"


class ModelError(ValueError):
    """Malformed model: bad bounds, unknown variable ids, duplicate coefficients."""


class InfeasibleWarmStartError(ValueError):
    """A supplied warm start violates the model constraints or integrality."""


class BackendUnavailableError(RuntimeError):
    """No solver backend registered under the requested name."""


@dataclass
class Variable:
    index: int
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = INF
    obj: float = 0.0


@dataclass
class LinearConstraint:
    coeffs: dict  # var index -> coefficient
    sense: str
    rhs: float
    tag: str = CORE
    name: str = ""

    def violation(self, values):
        lhs = 0.0
        for j, a in self.coeffs.items():
            lhs += a * values[j]
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


class MilpModel:
    """Minimization MILP: variables, bounds, objective, sparse rows."""

    def __init__(self, name="model"):
        self.name = name
        self.variables = []
        self.constraints = []

    # -- construction ---------------------------------------------------

    def add_variable(self, name, kind=CONTINUOUS, lb=0.0, ub=INF, obj=0.0):
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        if lb > ub:
            raise ModelError(f"variable {name}: lb {lb} > ub {ub}")
        v = Variable(len(self.variables), name, kind, float(lb), float(ub), float(obj))
        self.variables.append(v)
        return v.index

    def add_constraint(self, coeffs, sense, rhs, tag=CORE, name=""):
        if sense not in (LE, EQ, GE):
            raise ModelError(f"bad sense {sense!r}")
        clean = {}
        for j, a in coeffs.items() if isinstance(coeffs, dict) else coeffs:
            if not 0 <= j < len(self.variables):
                raise ModelError(f"constraint {name!r}: unknown variable id {j}")
            if j in clean:
                raise ModelError(f"constraint {name!r}: duplicate coefficient for id {j}")
            clean[j] = float(a)
        self.constraints.append(LinearConstraint(clean, sense, float(rhs), tag, name))
        return len(self.constraints) - 1

    def add_coefficient(self, row, var, coef):
        """Add `coef` to an existing row's coefficient for `var`."""
        c = self.constraints[row]
        c.coeffs[var] = c.coeffs.get(var, 0.0) + float(coef)

    # -- queries ----------------------------------------------------------

    @property
    def num_variables(self):
        return len(self.variables)

    @property
    def num_constraints(self):
        return len(self.constraints)

    def integer_indices(self):
        return [v.index for v in self.variables if v.kind in (BINARY, INTEGER)]

    def objective_vector(self):
        return np.array([v.obj for v in self.variables])

    def bounds_arrays(self):
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        return lb, ub

    def objective_value(self, values):
        return float(np.dot(self.objective_vector(), np.asarray(values, dtype=float)))

    def dense_matrix(self):
        """Constraint rows as a dense array plus sense codes and rhs."""
        m, n = self.num_constraints, self.num_variables
        if m * n > 80_000_000:
            raise ModelError(f"model too large for dense solve ({m}x{n})")
        A = np.zeros((m, n))
        b = np.empty(m)
        senses = np.empty(m, dtype=np.int8)
        code = {LE: 0, EQ: 1, GE: 2}
        for i, c in enumerate(self.constraints):
            for j, a in c.coeffs.items():
                A[i, j] = a
            b[i] = c.rhs
            senses[i] = code[c.sense]
        return A, b, senses


@dataclass
class SolverConfig:
    time_limit: float = 900.0
    abs_gap: float = 1e-9
    rel_gap: float = 0.0
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    seed: int = 0  # reserved for stochastic node orderings; search is deterministic

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        for t in (self.int_tol, self.feas_tol):
            if t <= 0:
                raise ValueError("tolerances must be positive")


@dataclass
class Solution:
    status: SolveStatus
    values: np.ndarray | None = None
    objective: float = INF
    best_bound: float = -INF
    gap: float = INF
    node_count: int = 0
    trace: list = field(default_factory=list)  # (nodes explored, incumbent objective)

    @property
    def has_values(self):
        return self.values is not None


@dataclass
class FeasibilityReport:
    violations: list  # (label, magnitude)

    @property
    def feasible(self):
        return not self.violations

    def worst(self):
        return max((m for _, m in self.violations), default=0.0)


def check_feasible(model, values, tol=1e-7):
    """Check `values` against every constraint and variable bound.

    Returns a report listing each violated row (and bound) with its
    violation magnitude; the report is empty iff the point is feasible
    within `tol`.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != model.num_variables:
        raise ModelError("values must cover all variables")
    out = []
    for v in model.variables:
        x = values[v.index]
        if x < v.lb - tol:
            out.append((f"bound[{v.name}]>=lb", float(v.lb - x)))
        if x > v.ub + tol:
            out.append((f"bound[{v.name}]<=ub", float(x - v.ub)))
    for i, c in enumerate(model.constraints):
        mag = c.violation(values)
        if mag > tol:
            out.append((c.name or f"row[{i}]", float(mag)))
    return FeasibilityReport(out)


def _fmt(x):
    return f"{x:.17g}"


def write_lp(model):
    """Model in CPLEX-LP text format (17 significant digits) for debugging."""
    lines = [f"\\ {model.name}", "Minimize", " obj:"]
    terms = []
    for v in model.variables:
        if v.obj != 0.0:
            terms.append(f" {'+' if v.obj >= 0 else '-'} {_fmt(abs(v.obj))} {v.name}")
    lines.append("".join(terms) if terms else " 0 x0")
    lines.append("Subject To")
    op = {LE: "<=", EQ: "=", GE: ">="}
    for i, c in enumerate(model.constraints):
        row = [f" {c.name or 'c%d' % i}:"]
        for j in sorted(c.coeffs):
            a = c.coeffs[j]
            row.append(f" {'+' if a >= 0 else '-'} {_fmt(abs(a))} {model.variables[j].name}")
        row.append(f" {op[c.sense]} {_fmt(c.rhs)}")
        lines.append("".join(row))
    lines.append("Bounds")
    for v in model.variables:
        lo = "-inf" if v.lb == -INF else _fmt(v.lb)
        hi = "+inf" if v.ub == INF else _fmt(v.ub)
        lines.append(f" {lo} <= {v.name} <= {hi}")
    binaries = [v.name for v in model.variables if v.kind == BINARY]
    generals = [v.name for v in model.variables if v.kind == INTEGER]
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(binaries))
    if generals:
        lines.append("Generals")
        lines.append(" " + " ".join(generals))
    lines.append("End")
    return "\n".join(lines) + "\n"
