"""Branch and bound against exhaustive enumeration, plus instrumentation
invariants: traces, gap, determinism, limits."""

import math

import numpy as np
import pytest

from tightmip.model import BINARY, CONTINUOUS, GE, LE, MAX, MIN, LinConstraint, MilpModel, VarSpec, evaluate
from tightmip.branch_bound import MilpOutcome, SolveConfig, relative_gap, solve_milp
from helpers import oracle_milp, random_model, tiny_model


def test_tiny_knapsack():
    out = solve_milp(tiny_model())
    assert out.status == "optimal"
    assert out.objective == pytest.approx(2.0)
    assert out.point[1] == pytest.approx(1.0)


def test_matches_enumeration_on_random_models():
    rng = np.random.default_rng(314159)
    solved = 0
    for trial in range(60):
        m = random_model(
            rng,
            n_bin=int(rng.integers(1, 7)),
            n_cont=int(rng.integers(0, 4)),
            n_rows=int(rng.integers(1, 7)),
        )
        want_status, want_obj, _ = oracle_milp(m)
        if want_status == "unbounded":
            continue
        out = solve_milp(m)
        assert out.status == want_status, f"trial {trial}"
        if want_status == "optimal":
            assert out.objective == pytest.approx(want_obj, abs=1e-6, rel=1e-7)
            res = evaluate(m, out.point)
            assert res.feasible
            solved += 1
    assert solved >= 30


def test_pure_binary_knapsack_family():
    rng = np.random.default_rng(2718)
    for trial in range(25):
        n = 8
        w = rng.integers(1, 20, size=n).astype(float)
        p = rng.integers(1, 30, size=n).astype(float)
        cap = float(rng.integers(10, 60))
        vars = tuple(VarSpec(f"b{i}", BINARY, 0, 1) for i in range(n))
        rows = (LinConstraint({i: w[i] for i in range(n)}, LE, cap, "cap"),)
        m = MilpModel.build(vars, rows, {i: p[i] for i in range(n)}, MAX)
        # direct 2^n enumeration, no LP involved
        best = 0.0
        for mask in range(1 << n):
            bits = np.array([(mask >> i) & 1 for i in range(n)], dtype=float)
            if bits @ w <= cap:
                best = max(best, float(bits @ p))
        out = solve_milp(m)
        assert out.status == "optimal"
        assert out.objective == pytest.approx(best, abs=1e-6)


def test_infeasible_milp():
    vars = (VarSpec("b0", BINARY, 0, 1), VarSpec("b1", BINARY, 0, 1))
    rows = (
        LinConstraint({0: 1.0, 1: 1.0}, GE, 1.2, "lo"),
        LinConstraint({0: 1.0, 1: 1.0}, LE, 1.8, "hi"),
        LinConstraint({0: 1.0, 1: -1.0}, GE, 0.5, "gap"),
        LinConstraint({0: -1.0, 1: 1.0}, GE, 0.5, "gap2"),
    )
    m = MilpModel.build(vars, rows, {0: 1.0}, MAX)
    out = solve_milp(m)
    assert out.status == "infeasible"
    assert out.point is None
    assert math.isnan(out.objective)


def test_bound_trace_monotone_max():
    rng = np.random.default_rng(11)
    checked = 0
    for trial in range(20):
        m = random_model(rng, 6, 2, 5, maximize=True)
        out = solve_milp(m)
        if out.status != "optimal":
            continue
        lows = [e[1] for e in out.bound_trace]
        ups = [e[2] for e in out.bound_trace]
        assert all(b >= a - 1e-9 for a, b in zip(lows, lows[1:])), "lower bound regressed"
        assert all(b <= a + 1e-9 for a, b in zip(ups, ups[1:])), "upper bound regressed"
        assert all(u >= l - 1e-9 for l, u in zip(lows, ups))
        # final entry closes the gap
        assert lows[-1] == pytest.approx(ups[-1], abs=1e-9)
        assert relative_gap(lows[-1], ups[-1]) <= 1e-9
        assert out.gap <= 1e-9
        checked += 1
    assert checked >= 10


def test_bound_trace_monotone_min():
    rng = np.random.default_rng(12)
    checked = 0
    for trial in range(40):
        m = random_model(rng, 5, 2, 5, maximize=False)
        out = solve_milp(m)
        if out.status != "optimal":
            continue
        lows = [e[1] for e in out.bound_trace]
        ups = [e[2] for e in out.bound_trace]
        assert all(b >= a - 1e-9 for a, b in zip(lows, lows[1:]))
        assert all(b <= a + 1e-9 for a, b in zip(ups, ups[1:]))
        checked += 1
    assert checked >= 10


def test_deterministic_reruns():
    rng = np.random.default_rng(555)
    m = random_model(rng, 8, 3, 6, maximize=True)
    a = solve_milp(m, SolveConfig(seed=3))
    b = solve_milp(m, SolveConfig(seed=3))
    assert a.status == b.status
    assert a.nodes == b.nodes
    assert a.iterations == b.iterations
    if a.point is not None:
        assert np.array_equal(a.point, b.point)
        assert a.objective == b.objective
    # traces identical except wall times
    assert [(l, u) for _, l, u in a.bound_trace] == [(l, u) for _, l, u in b.bound_trace]


def test_node_limit_status():
    rng = np.random.default_rng(606)
    for trial in range(10):
        m = random_model(rng, 10, 2, 6, maximize=True)
        full = solve_milp(m, SolveConfig(root_dive=False))
        if full.status == "optimal" and full.nodes > 3:
            out = solve_milp(m, SolveConfig(node_limit=2, root_dive=False))
            assert out.status == "node-limit"
            assert out.nodes <= 2
            return
    pytest.fail("no suitable model found")


def test_gap_limit_status():
    rng = np.random.default_rng(808)
    for trial in range(30):
        m = random_model(rng, 10, 2, 6, maximize=True)
        full = solve_milp(m)
        if full.status == "optimal" and full.nodes > 8:
            out = solve_milp(m, SolveConfig(gap_limit=0.5))
            assert out.status in ("gap-limit", "optimal")
            if out.status == "gap-limit":
                assert out.gap <= 0.5
                return
    pytest.fail("no suitable model found")


def test_config_validation():
    with pytest.raises(ValueError):
        solve_milp(tiny_model(), SolveConfig(gap_limit=1.5))
    with pytest.raises(ValueError):
        solve_milp(tiny_model(), SolveConfig(branching="pseudo-cost"))
    with pytest.raises(ValueError):
        solve_milp(tiny_model(), SolveConfig(node_order="dfs"))


def test_pure_lp_through_milp_path():
    m = MilpModel.build(
        (VarSpec("x", CONTINUOUS, 0.0, 4.0), VarSpec("y", CONTINUOUS, 0.0, 4.0)),
        (LinConstraint({0: 1.0, 1: 1.0}, LE, 5.0, "r"),),
        {0: 2.0, 1: 1.0},
        MAX,
    )
    out = solve_milp(m)
    assert out.status == "optimal"
    assert out.objective == pytest.approx(9.0)
    assert out.nodes == 1


def test_warm_started_solve_same_answer():
    rng = np.random.default_rng(322)
    m = random_model(rng, 6, 3, 6, maximize=True)
    cold = solve_milp(m)
    assert cold.status == "optimal"
    # a sibling instance: same structure, perturbed objective
    c2 = {i: c * 1.07 + 0.013 for i, c in m.objective}
    m2 = MilpModel.build(m.vars, m.constraints, c2, m.sense)
    cold2 = solve_milp(m2)
    warm2 = solve_milp(m2, start=cold.root_basis)
    assert cold2.status == warm2.status == "optimal"
    assert warm2.objective == pytest.approx(cold2.objective, abs=1e-6, rel=1e-9)


def test_reliability_matches_enumeration():
    rng = np.random.default_rng(424242)
    cfg = SolveConfig(branching="reliability")
    solved = 0
    for trial in range(40):
        m = random_model(
            rng,
            n_bin=int(rng.integers(1, 7)),
            n_cont=int(rng.integers(0, 4)),
            n_rows=int(rng.integers(1, 7)),
        )
        want_status, want_obj, _ = oracle_milp(m)
        if want_status == "unbounded":
            continue
        out = solve_milp(m, cfg)
        assert out.status == want_status, f"trial {trial}"
        if want_status == "optimal":
            assert out.objective == pytest.approx(want_obj, abs=1e-6, rel=1e-7)
            assert evaluate(m, out.point).feasible
            solved += 1
    assert solved >= 20


def test_reliability_deterministic_reruns():
    rng = np.random.default_rng(777)
    m = random_model(rng, 9, 3, 7, maximize=True)
    a = solve_milp(m, SolveConfig(branching="reliability"))
    b = solve_milp(m, SolveConfig(branching="reliability"))
    assert a.status == b.status
    assert a.nodes == b.nodes
    assert a.iterations == b.iterations
    if a.point is not None:
        assert np.array_equal(a.point, b.point)
    assert [(l, u) for _, l, u in a.bound_trace] == [(l, u) for _, l, u in b.bound_trace]


def test_incumbent_hint_same_answer():
    rng = np.random.default_rng(905)
    checked = 0
    for trial in range(20):
        m = random_model(rng, 7, 3, 6, maximize=True)
        plain = solve_milp(m)
        if plain.status != "optimal":
            continue
        c2 = {i: c * 0.93 + 0.021 for i, c in m.objective}
        m2 = MilpModel.build(m.vars, m.constraints, c2, m.sense)
        want = solve_milp(m2)
        if want.status != "optimal":
            continue
        hinted = solve_milp(m2, hint=plain.point)
        assert hinted.status == "optimal"
        assert hinted.objective == pytest.approx(want.objective, abs=1e-6, rel=1e-9)
        checked += 1
    assert checked >= 8


def test_useless_hint_is_harmless():
    m = tiny_model()
    want = solve_milp(m)
    # a hint that violates the rows outright must change nothing
    hinted = solve_milp(m, hint=np.ones(len(m.vars)) * 7.3)
    assert hinted.status == want.status == "optimal"
    assert hinted.objective == pytest.approx(want.objective)
