"""Scheduling generator tests: index layout, per-family row counts,
round trips, perturbation behaviour, and a hand-checked tiny plant."""

import math

import numpy as np
import pytest

from tightmip.branch_bound import SolveConfig, solve_milp
from tightmip.model import EQ, evaluate, encode_instance
from tightmip.stn import (
    KIND_TASK,
    KIND_UNIT,
    PerturbSpec,
    SchedulingTheta,
    StateSpec,
    StnData,
    TaskSpec,
    UnitSpec,
    build_instance,
    decode_theta,
    default_data,
    encode_theta,
    nominal_theta,
    perturb_theta,
    read_data,
    read_theta,
    task_unit_pairs,
    validate_data,
    write_data,
    write_theta,
)

INF = math.inf


def count_tags(model, prefix):
    return sum(1 for c in model.constraints if c.tag.startswith(prefix + "["))


def family_counts(data):
    """Independent combinatorial oracle for rows per family."""
    pairs = task_unit_pairs(data)
    P, J, S, E = len(pairs), len(data.units), len(data.states), data.events
    tasks = {t.name: t for t in data.tasks}
    consumed_combos = sum(len(tasks[t].consumed) for t, _ in pairs)
    finite = sum(1 for s in data.states if s.storage_cap < INF)
    per_unit = [sum(1 for _, j in pairs if j == u.name) for u in data.units]
    same_unit = sum(k * (k - 1) for k in per_unit)
    cross_unit = sum(per_unit) ** 2 - sum(k * k for k in per_unit)
    return {
        "alloc": J * E,
        "init": S,
        "avail": consumed_combos * E,
        "cap": P * E,
        "store": finite * E,
        "balance": S * (E - 1),
        "duration": P * E,
        "seq-same": P * (E - 1),
        "mono-start": P * (E - 1),
        "mono-finish": P * (E - 1),
        "seq-unit": same_unit * (E - 1),
        "seq-cross": cross_unit * (E - 1),
        "seq-busy": P * (E - 1),
        "horizon-f": P * E,
        "horizon-s": P * E,
    }


def tiny_plant(events=3):
    """One heater, one priced product.  With a horizon of 8 and a full
    batch taking 4 hours, two back-to-back batches of 100 fit, so the
    optimum revenue is 10 * 200 = 2000."""
    units = (UnitSpec("H1", 100.0, ("heating",), 4.0),)
    states = (
        StateSpec("FeedA", INF, 1000.0, 0.0),
        StateSpec("HotA", INF, 0.0, 10.0),
    )
    tasks = (TaskSpec("heating", (("FeedA", -1.0),), (("HotA", 1.0),)),)
    return StnData(units, states, tasks, 8.0, events)


def test_default_data_shape():
    data = default_data()
    assert validate_data(data) == []
    assert len(data.units) == 8
    assert len(data.states) == 9
    assert len(data.tasks) == 5
    assert data.events == 9 and data.horizon == 8.0
    assert len(task_unit_pairs(data)) == 16


def test_binary_index_layout():
    data = default_data(events=9)
    model, index = build_instance(data, nominal_theta(data))
    assert index.p == (16 + 8) * 9 == 216
    assert model.binary_index == tuple(range(216))
    # event-major: 16 task starts in pair order, then 8 unit flags
    assert index.entries[0] == (KIND_TASK, "heating@Heater1", 0)
    assert index.entries[1] == (KIND_TASK, "heating@Heater2", 0)
    assert index.entries[2] == (KIND_TASK, "reaction1@Reactor1", 0)
    assert index.entries[16] == (KIND_UNIT, "Heater1", 0)
    assert index.entries[24] == (KIND_TASK, "heating@Heater1", 1)
    assert index.position(KIND_TASK, "heating@Heater1", 1) == 24
    assert index.position(KIND_UNIT, "Still2", 8) == 215
    names = [model.vars[i].name for i in range(3)]
    assert names == ["m[heating@Heater1,0]", "m[heating@Heater2,0]", "m[reaction1@Reactor1,0]"]


@pytest.mark.parametrize("events", [2, 3, 9])
def test_row_counts_per_family(events):
    data = default_data(events=events)
    model, _ = build_instance(data, nominal_theta(data))
    expect = family_counts(data)
    for fam, k in expect.items():
        assert count_tags(model, fam) == k, fam
    assert len(model.constraints) == sum(expect.values())


def test_default_size_at_nine_events():
    data = default_data(events=9)
    model, index = build_instance(data, nominal_theta(data))
    # 104 rows per event, 313 per gap between events, 9 inventory starts
    assert len(model.constraints) == 9 + 104 * 9 + 313 * 8 == 3449
    # columns: 24 binaries, 16 batch sizes, 9 inventories, 16 starts and
    # 16 finishes per event point, 2 sales per event point after the first
    assert len(model.vars) == 81 * 9 + 2 * 8 == 745
    assert index.p == 216


def test_build_is_deterministic():
    data = default_data(events=3)
    theta = perturb_theta(nominal_theta(data), PerturbSpec(0.1, 7))
    m1, i1 = build_instance(data, theta)
    m2, i2 = build_instance(data, theta)
    assert encode_instance(m1) == encode_instance(m2)
    assert i1 == i2


def test_literal_duration_variant():
    data = default_data(events=2)
    theta = nominal_theta(data)
    literal, _ = build_instance(data, theta, literal_a8=True)
    default, _ = build_instance(data, theta, literal_a8=False)
    lit_rows = [c for c in literal.constraints if c.tag.startswith("duration[")]
    def_rows = [c for c in default.constraints if c.tag.startswith("duration[")]
    assert len(lit_rows) == len(def_rows) == 32
    assert all(len(c.coeffs) == 3 and c.sense == EQ for c in lit_rows)
    assert all(len(c.coeffs) == 4 for c in def_rows if c.rhs == 0.0)
    tv = theta.tv[("heating", "Heater1")]
    assert any(abs(c.rhs - tv) < 1e-12 for c in lit_rows)


def test_nominal_theta_split():
    data = default_data()
    theta = nominal_theta(data)
    assert theta.tc[("heating", "Heater1")] == pytest.approx(8.0 / 3.0)
    assert theta.tv[("heating", "Heater1")] == pytest.approx((4.0 / 3.0) / 100.0)
    assert theta.tc[("reaction1", "Reactor2")] == pytest.approx(2.0)
    assert theta.price == {"Product1": 25.0, "Product2": 30.0}


def test_perturbation_is_seeded_and_bounded():
    data = default_data()
    theta = nominal_theta(data)
    a = perturb_theta(theta, PerturbSpec(0.25, 3))
    b = perturb_theta(theta, PerturbSpec(0.25, 3))
    c = perturb_theta(theta, PerturbSpec(0.25, 4))
    assert a == b
    assert a != c
    for base, out in ((theta.tc, a.tc), (theta.tv, a.tv), (theta.price, a.price)):
        for k in base:
            ratio = out[k] / base[k]
            assert 0.75 - 1e-12 <= ratio <= 1.25 + 1e-12
    with pytest.raises(ValueError):
        perturb_theta(theta, PerturbSpec(0.0, 1))


def test_data_validation_catches_problems():
    bad = StnData(
        (UnitSpec("U", 10.0, ("mystery",), 1.0),),
        (StateSpec("A", INF, 1.0, 0.0),),
        (TaskSpec("t", (("A", -0.5),), (("A", 1.0),)),),
        8.0,
        2,
    )
    problems = validate_data(bad)
    assert any("unknown task" in p for p in problems)
    assert any("no suitable unit" in p for p in problems)
    assert any("sum to" in p for p in problems)
    with pytest.raises(ValueError):
        build_instance(bad, SchedulingTheta({}, {}, {}))


def test_theta_mismatch_rejected():
    data = default_data(events=2)
    theta = nominal_theta(data)
    wrong = SchedulingTheta(dict(theta.tc), dict(theta.tv), {"Product1": 25.0})
    with pytest.raises(ValueError):
        build_instance(data, wrong)


def test_data_and_theta_round_trip(tmp_path):
    data = default_data(events=4)
    theta = perturb_theta(nominal_theta(data), PerturbSpec(0.05, 11))
    write_data(data, tmp_path / "plant.json")
    write_theta(theta, tmp_path / "theta.json")
    assert read_data(tmp_path / "plant.json") == data
    assert read_theta(tmp_path / "theta.json") == theta
    assert decode_theta(encode_theta(theta)) == theta
    with pytest.raises(ValueError):
        decode_theta({"format": "nope"})


def test_tiny_plant_optimum_by_hand():
    data = tiny_plant(events=3)
    model, index = build_instance(data, nominal_theta(data))
    out = solve_milp(model, SolveConfig(seed=0))
    assert out.status == "optimal"
    assert out.objective == pytest.approx(2000.0, abs=1e-6)
    check = evaluate(model, out.point)
    assert check.feasible
    # both heater runs fire at the first two event points
    m0 = index.position(KIND_TASK, "heating@H1", 0)
    m1 = index.position(KIND_TASK, "heating@H1", 1)
    m2 = index.position(KIND_TASK, "heating@H1", 2)
    assert out.point[m0] == pytest.approx(1.0)
    assert out.point[m1] == pytest.approx(1.0)
    assert out.point[m2] == pytest.approx(0.0)


def test_full_plant_small_solve():
    data = default_data(events=3)
    model, _ = build_instance(data, nominal_theta(data))
    out = solve_milp(model, SolveConfig(lazy_tags=("seq-",), seed=0))
    assert out.status == "optimal"
    assert out.objective > 0.0
    check = evaluate(model, out.point)
    assert check.feasible, check.max_violation
