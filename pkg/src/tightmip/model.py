"""Mixed-integer linear program containers and the canonical instance format.

A model is a plain immutable description: variables with bounds, sparse
linear constraints, a sparse objective and a sense.  Nothing in here
solves anything; solvers and generators both speak this interface.

Conventions
-----------
* Variables are referenced by position in the ``vars`` tuple.
* Constraint coefficients are sparse maps ``var index -> coefficient``
  stored as sorted ``(index, coeff)`` pairs with no zero entries.
* ``binary_index`` lists the indices of the binary variables in
  declaration order; it is the contract between a model and anything
  that reads or constrains its binary sub-vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .serialize import fnum, pnum, dump_json, load_json

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
GE = ">="
EQ = "="
ROW_SENSES = (LE, GE, EQ)

MIN = "min"
MAX = "max"

FORMAT_TAG = "tighten-mip/1"

DEFAULT_TOL = 1e-6

INF = math.inf


@dataclass(frozen=True)
class VarSpec:
    """One decision variable: name, kind and bounds."""

    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = INF


@dataclass(frozen=True)
class LinConstraint:
    """A sparse row ``sum(coeff * x[idx]) sense rhs`` with a provenance tag."""

    coeffs: tuple
    sense: str
    rhs: float
    tag: str = ""

    def __init__(self, coeffs, sense, rhs, tag=""):
        if isinstance(coeffs, dict):
            items = coeffs.items()
        else:
            items = coeffs
        terms = tuple(sorted((int(i), float(c)) for i, c in items if c != 0.0))
        object.__setattr__(self, "coeffs", terms)
        object.__setattr__(self, "sense", sense)
        object.__setattr__(self, "rhs", float(rhs))
        object.__setattr__(self, "tag", tag)

    def indices(self):
        return [i for i, _ in self.coeffs]

    def activity(self, x) -> float:
        return float(sum(c * x[i] for i, c in self.coeffs))

    def violation(self, x) -> float:
        """How far x is on the wrong side of this row (0 if satisfied)."""
        act = self.activity(x)
        if self.sense == LE:
            return max(0.0, act - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - act)
        return abs(act - self.rhs)


@dataclass(frozen=True)
class MilpModel:
    """Immutable MILP: variables, constraints, objective, sense."""

    vars: tuple
    constraints: tuple
    objective: tuple  # sorted sparse (index, coeff) pairs
    sense: str
    binary_index: tuple

    @staticmethod
    def build(vars, constraints, objective, sense):
        """Assemble a model, deriving binary_index from the var kinds."""
        vars = tuple(vars)
        constraints = tuple(constraints)
        if isinstance(objective, dict):
            objective = objective.items()
        obj = tuple(sorted((int(i), float(c)) for i, c in objective if c != 0.0))
        bidx = tuple(i for i, v in enumerate(vars) if v.kind == BINARY)
        return MilpModel(vars, constraints, obj, sense, bidx)

    @property
    def num_vars(self) -> int:
        return len(self.vars)

    @property
    def num_binary(self) -> int:
        return len(self.binary_index)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(len(self.vars))
        for i, v in self.objective:
            c[i] = v
        return c

    def bounds_arrays(self):
        lo = np.array([v.lower for v in self.vars], dtype=float)
        up = np.array([v.upper for v in self.vars], dtype=float)
        return lo, up


@dataclass(frozen=True)
class Evaluation:
    feasible: bool
    objective: float
    max_violation: float


def validate(model: MilpModel) -> list:
    """Return a list of human-readable structural violations (empty if clean)."""
    problems = []
    n = len(model.vars)
    names = set()
    for i, v in enumerate(model.vars):
        if v.name in names:
            problems.append(f"duplicate variable name {v.name!r}")
        names.add(v.name)
        if v.kind not in (CONTINUOUS, BINARY):
            problems.append(f"var {v.name!r}: unknown kind {v.kind!r}")
        if not v.lower <= v.upper:
            problems.append(f"var {v.name!r}: lower {v.lower} > upper {v.upper}")
        if v.kind == BINARY and (v.lower, v.upper) != (0.0, 1.0):
            problems.append(f"binary var {v.name!r}: bounds must be [0, 1]")
    declared = tuple(i for i, v in enumerate(model.vars) if v.kind == BINARY)
    if tuple(model.binary_index) != declared:
        problems.append("binary_index does not match binary vars in declaration order")
    for i, c in model.objective:
        if not 0 <= i < n:
            problems.append(f"objective references var index {i} out of range")
        if c == 0.0:
            problems.append(f"objective stores zero coefficient for var {i}")
    if model.sense not in (MIN, MAX):
        problems.append(f"unknown objective sense {model.sense!r}")
    for k, row in enumerate(model.constraints):
        label = row.tag or f"row {k}"
        if row.sense not in ROW_SENSES:
            problems.append(f"{label}: unknown sense {row.sense!r}")
        last = -1
        for i, c in row.coeffs:
            if not 0 <= i < n:
                problems.append(f"{label}: var index {i} out of range")
            if c == 0.0:
                problems.append(f"{label}: zero coefficient stored for var {i}")
            if i <= last:
                problems.append(f"{label}: indices not strictly increasing")
            last = i
        if not math.isfinite(row.rhs):
            problems.append(f"{label}: non-finite rhs {row.rhs}")
    return problems


def evaluate(model: MilpModel, point, tol: float = DEFAULT_TOL) -> Evaluation:
    """Check a point against bounds, rows and integrality; report objective.

    ``max_violation`` is the largest infeasibility over all checks, so a
    feasible point has ``max_violation <= tol``.  Integrality violation of
    a binary is its distance to the nearest of {0, 1}.
    """
    x = np.asarray(point, dtype=float)
    if x.shape != (len(model.vars),):
        raise ValueError(f"point has shape {x.shape}, expected ({len(model.vars)},)")
    worst = 0.0
    for i, v in enumerate(model.vars):
        if v.lower > -INF:
            worst = max(worst, v.lower - x[i])
        if v.upper < INF:
            worst = max(worst, x[i] - v.upper)
    for i in model.binary_index:
        worst = max(worst, min(abs(x[i]), abs(x[i] - 1.0)))
    for row in model.constraints:
        worst = max(worst, row.violation(x))
    obj = float(sum(c * x[i] for i, c in model.objective))
    return Evaluation(feasible=bool(worst <= tol), objective=obj, max_violation=float(worst))


def _enc_bound(b: float) -> str:
    return fnum(b)


def encode_instance(model: MilpModel) -> dict:
    """Model -> JSON-ready dict in the tighten-mip/1 format."""
    return {
        "format": FORMAT_TAG,
        "sense": model.sense,
        "vars": [
            {"name": v.name, "kind": v.kind, "lb": _enc_bound(v.lower), "ub": _enc_bound(v.upper)}
            for v in model.vars
        ],
        "objective": [[i, fnum(c)] for i, c in model.objective],
        "constraints": [
            {
                "tag": row.tag,
                "terms": [[i, fnum(c)] for i, c in row.coeffs],
                "sense": row.sense,
                "rhs": fnum(row.rhs),
            }
            for row in model.constraints
        ],
        "binary_index": list(model.binary_index),
    }


def decode_instance(doc: dict) -> MilpModel:
    """JSON dict -> model. Raises ValueError on a wrong format tag."""
    if doc.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported instance format {doc.get('format')!r}")
    vars = tuple(
        VarSpec(d["name"], d["kind"], pnum(d["lb"]), pnum(d["ub"])) for d in doc["vars"]
    )
    constraints = tuple(
        LinConstraint(
            [(i, pnum(c)) for i, c in d["terms"]],
            d["sense"],
            pnum(d["rhs"]),
            d.get("tag", ""),
        )
        for d in doc["constraints"]
    )
    objective = tuple((int(i), pnum(c)) for i, c in doc["objective"])
    return MilpModel(vars, constraints, objective, doc["sense"], tuple(doc["binary_index"]))


def write_instance(model: MilpModel, path) -> None:
    dump_json(encode_instance(model), path)


def read_instance(path) -> MilpModel:
    return decode_instance(load_json(path))
