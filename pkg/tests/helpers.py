"""Shared generators and reference oracles for the test suite.

The oracles are intentionally independent of the package solver:
LPs go to scipy's HiGHS, MILPs are settled by exhaustive enumeration
of binary assignments with the continuous remainder handed to HiGHS.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from tightmip.model import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    LE,
    MAX,
    MIN,
    LinConstraint,
    MilpModel,
    VarSpec,
)

INF = math.inf


def random_model(rng, n_bin, n_cont, n_rows, density=0.7, maximize=None, free_frac=0.2):
    """A random small MILP with finite optimum being likely but not guaranteed."""
    if n_bin + n_cont == 0:
        n_cont = 1
    n = n_bin + n_cont
    vars = []
    for i in range(n_bin):
        vars.append(VarSpec(f"b{i}", BINARY, 0.0, 1.0))
    for i in range(n_cont):
        lo = 0.0
        up = float(rng.integers(1, 10))
        if rng.random() < free_frac:
            lo = -float(rng.integers(0, 5))
        vars.append(VarSpec(f"x{i}", CONTINUOUS, lo, up))
    rows = []
    for k in range(n_rows):
        idx = [i for i in range(n) if rng.random() < density]
        if not idx:
            idx = [int(rng.integers(0, n))]
        coeffs = {i: float(rng.integers(-5, 6)) or 1.0 for i in idx}
        sense = (LE, GE, EQ)[int(rng.integers(0, 3 if k % 4 == 0 else 2))]
        # keep equalities satisfiable more often than not
        rhs = float(rng.integers(0, 12)) if sense != GE else float(rng.integers(-4, 8))
        rows.append(LinConstraint(coeffs, sense, rhs, tag=f"r{k}"))
    obj = {i: float(rng.integers(-9, 10)) for i in range(n)}
    sense = (MAX if rng.random() < 0.5 else MIN) if maximize is None else (MAX if maximize else MIN)
    return MilpModel.build(vars, rows, obj, sense)


def _scipy_arrays(model, fixed=None):
    n = len(model.vars)
    c = np.zeros(n)
    for i, v in model.objective:
        c[i] = v
    if model.sense == MAX:
        c = -c
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row in model.constraints:
        a = np.zeros(n)
        for i, v in row.coeffs:
            a[i] = v
        if row.sense == LE:
            A_ub.append(a)
            b_ub.append(row.rhs)
        elif row.sense == GE:
            A_ub.append(-a)
            b_ub.append(-row.rhs)
        else:
            A_eq.append(a)
            b_eq.append(row.rhs)
    bounds = []
    for i, v in enumerate(model.vars):
        lo, up = v.lower, v.upper
        if fixed is not None and i in fixed:
            lo = up = fixed[i]
        bounds.append((None if lo == -INF else lo, None if up == INF else up))
    return c, A_ub, b_ub, A_eq, b_eq, bounds


def oracle_lp(model, fixed=None):
    """Reference LP solve via HiGHS. Returns (status, objective, point)."""
    c, A_ub, b_ub, A_eq, b_eq, bounds = _scipy_arrays(model, fixed)
    res = linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return "infeasible", math.nan, None
    if res.status == 3:
        return "unbounded", math.nan, None
    assert res.status == 0, f"oracle returned status {res.status}"
    obj = res.fun if model.sense == MIN else -res.fun
    return "optimal", obj, res.x


def oracle_milp(model):
    """Reference MILP solve by enumerating all binary assignments."""
    best = None
    best_x = None
    for bits in itertools.product((0.0, 1.0), repeat=len(model.binary_index)):
        fixed = dict(zip(model.binary_index, bits))
        status, obj, x = oracle_lp(model, fixed)
        if status == "unbounded":
            return "unbounded", math.nan, None
        if status != "optimal":
            continue
        if best is None or (obj > best + 1e-9 if model.sense == MAX else obj < best - 1e-9):
            best, best_x = obj, x
    if best is None:
        return "infeasible", math.nan, None
    return "optimal", best, best_x


def tiny_model(sense=MAX):
    """max x0 + 2 x1  s.t.  x0 + x1 <= 1.5, binaries."""
    vars = (VarSpec("b0", BINARY, 0, 1), VarSpec("b1", BINARY, 0, 1))
    rows = (LinConstraint({0: 1.0, 1: 1.0}, LE, 1.5, "cap"),)
    return MilpModel.build(vars, rows, {0: 1.0, 1: 2.0}, sense)
