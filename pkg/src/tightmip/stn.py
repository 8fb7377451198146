"""Batch-process scheduling instance generator (state-task network).

Builds the continuous-time event-point MILP for a plant of 8 units, 9
material states and 5 recipe tasks, where tasks are expanded into one
(task, unit) pair per suitable unit.  The parametric part theta holds
the constant and variable processing-time terms and the product prices;
perturbed thetas model historical instance families.

Index-set readings that the printed formulation leaves open:
* batch-size availability rows range over the states a task consumes,
* the material balance starts at the second event point (the initial
  inventory row fixes the first),
* cross-unit sequencing is emitted for distinct units only, because the
  same-unit family already covers equal units,
* sales variables exist only for priced states and only from the second
  event point on, where the balance rows define them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import BINARY, CONTINUOUS, EQ, GE, LE, MAX, LinConstraint, MilpModel, VarSpec
from .serialize import fnum, pnum, dump_json, load_json

INF = math.inf

DATA_TAG = "stn-data/1"
THETA_TAG = "stn-theta/1"

KIND_TASK = "task-start"
KIND_UNIT = "unit-use"

# Row tag families that a branch-and-bound run may activate on demand.
# Only the balance rows couple the whole schedule tightly enough to be
# worth carrying from the start; everything else binds sparsely, and
# solving over the active subset is several times faster at this size.
LAZY_ROW_TAGS = (
    "alloc",
    "avail",
    "cap",
    "duration",
    "mono-finish",
    "mono-start",
    "seq-busy",
    "seq-cross",
    "seq-same",
    "seq-unit",
)


@dataclass(frozen=True)
class UnitSpec:
    name: str
    capacity: float
    tasks: tuple  # names of tasks this unit can perform
    mean_time: float


@dataclass(frozen=True)
class StateSpec:
    name: str
    storage_cap: float  # inf = unlimited
    initial: float
    price: float


@dataclass(frozen=True)
class TaskSpec:
    """Recipe task: consumed proportions are stored negative, produced
    positive, so the balance row reads with plus signs throughout."""

    name: str
    consumed: tuple  # ((state, proportion < 0), ...)
    produced: tuple  # ((state, proportion > 0), ...)


@dataclass(frozen=True)
class StnData:
    units: tuple
    states: tuple
    tasks: tuple
    horizon: float
    events: int


@dataclass(frozen=True)
class SchedulingTheta:
    tc: dict  # (task, unit) -> constant time term
    tv: dict  # (task, unit) -> variable time term per material unit
    price: dict  # state -> price


@dataclass(frozen=True)
class PerturbSpec:
    level: float
    seed: int


@dataclass(frozen=True)
class BinaryIndex:
    """Ordered meaning of each position of the binary solution vector."""

    entries: tuple  # ((kind, name, event), ...)

    @property
    def p(self) -> int:
        return len(self.entries)

    def position(self, kind, name, event) -> int:
        try:
            lookup = object.__getattribute__(self, "_lookup")
        except AttributeError:
            lookup = {e: i for i, e in enumerate(self.entries)}
            object.__setattr__(self, "_lookup", lookup)
        return lookup[(kind, name, event)]


def default_data(events: int = 9, horizon: float = 8.0) -> StnData:
    """The benchmark plant: two heaters, four multipurpose reactors, two
    stills, and the classic five-task recipe."""
    units = (
        UnitSpec("Heater1", 100.0, ("heating",), 4.0),
        UnitSpec("Heater2", 120.0, ("heating",), 4.0),
        UnitSpec("Reactor1", 70.0, ("reaction1", "reaction2", "reaction3"), 4.0),
        UnitSpec("Reactor2", 80.0, ("reaction1", "reaction2", "reaction3"), 3.0),
        UnitSpec("Reactor3", 70.0, ("reaction1", "reaction2", "reaction3"), 4.0),
        UnitSpec("Reactor4", 120.0, ("reaction1", "reaction2", "reaction3"), 5.0),
        UnitSpec("Still1", 200.0, ("separation",), 5.0),
        UnitSpec("Still2", 150.0, ("separation",), 5.0),
    )
    states = (
        StateSpec("FeedA", INF, 1000.0, 0.0),
        StateSpec("FeedB", INF, 800.0, 0.0),
        StateSpec("FeedC", INF, 800.0, 0.0),
        StateSpec("HotA", 100.0, 0.0, 0.0),
        StateSpec("IntAB", 200.0, 0.0, 0.0),
        StateSpec("IntBC", 150.0, 0.0, 0.0),
        StateSpec("ImpureE", 200.0, 0.0, 0.0),
        StateSpec("Product1", INF, 0.0, 25.0),
        StateSpec("Product2", INF, 0.0, 30.0),
    )
    tasks = (
        TaskSpec("heating", (("FeedA", -1.0),), (("HotA", 1.0),)),
        TaskSpec("reaction1", (("FeedB", -0.5), ("FeedC", -0.5)), (("IntBC", 1.0),)),
        TaskSpec(
            "reaction2",
            (("HotA", -0.4), ("IntBC", -0.6)),
            (("IntAB", 0.6), ("Product1", 0.4)),
        ),
        TaskSpec("reaction3", (("FeedC", -0.2), ("IntAB", -0.8)), (("ImpureE", 1.0),)),
        TaskSpec("separation", (("ImpureE", -1.0),), (("Product2", 0.9), ("IntAB", 0.1))),
    )
    return StnData(units, states, tasks, float(horizon), int(events))


def validate_data(data: StnData) -> list:
    problems = []
    state_names = {s.name for s in data.states}
    task_names = {t.name for t in data.tasks}
    for u in data.units:
        if u.capacity < 0 or u.mean_time < 0:
            problems.append(f"unit {u.name}: negative capacity or mean time")
        for t in u.tasks:
            if t not in task_names:
                problems.append(f"unit {u.name}: unknown task {t!r}")
    for s in data.states:
        if s.initial < 0 or (s.storage_cap < 0):
            problems.append(f"state {s.name}: negative amount or cap")
    suitable = {t.name: 0 for t in data.tasks}
    for u in data.units:
        for t in u.tasks:
            if t in suitable:
                suitable[t] += 1
    for t in data.tasks:
        cons = sum(-pr for _, pr in t.consumed)
        prod = sum(pr for _, pr in t.produced)
        if abs(cons - 1.0) > 1e-9:
            problems.append(f"task {t.name}: consumed proportions sum to {cons}, not 1")
        if abs(prod - 1.0) > 1e-9:
            problems.append(f"task {t.name}: produced proportions sum to {prod}, not 1")
        if any(pr >= 0 for _, pr in t.consumed):
            problems.append(f"task {t.name}: consumed proportions must be negative")
        for st, _ in t.consumed + t.produced:
            if st not in state_names:
                problems.append(f"task {t.name}: unknown state {st!r}")
        if suitable[t.name] == 0:
            problems.append(f"task {t.name}: no suitable unit")
    if data.events < 1:
        problems.append("events must be >= 1")
    if data.horizon <= 0:
        problems.append("horizon must be positive")
    return problems


def task_unit_pairs(data: StnData):
    """Expanded (task, unit) pairs, task-major then unit declaration order."""
    out = []
    for t in data.tasks:
        for u in data.units:
            if t.name in u.tasks:
                out.append((t.name, u.name))
    return out


def nominal_theta(data: StnData) -> SchedulingTheta:
    """Split each unit's mean processing time into a constant term of two
    thirds and a per-unit-of-material term of one third over capacity."""
    units = {u.name: u for u in data.units}
    tc, tv = {}, {}
    for t, j in task_unit_pairs(data):
        u = units[j]
        tc[(t, j)] = 2.0 * u.mean_time / 3.0
        tv[(t, j)] = (u.mean_time / 3.0) / u.capacity if u.capacity > 0 else 0.0
    price = {s.name: s.price for s in data.states if s.price != 0.0}
    return SchedulingTheta(tc, tv, price)


def perturb_theta(theta: SchedulingTheta, spec: PerturbSpec) -> SchedulingTheta:
    """Multiply every entry by an independent uniform factor in [1-e, 1+e].

    Entries are visited in sorted key order (tc, then tv, then price) so
    the result depends only on (theta, level, seed).
    """
    if spec.level <= 0:
        raise ValueError("perturbation level must be positive")
    rng = np.random.default_rng(spec.seed)
    lo, hi = 1.0 - spec.level, 1.0 + spec.level

    def jitter(mapping):
        return {k: mapping[k] * float(rng.uniform(lo, hi)) for k in sorted(mapping)}

    return SchedulingTheta(jitter(theta.tc), jitter(theta.tv), jitter(theta.price))


def _theta_matches(data, theta):
    pairs = set(task_unit_pairs(data))
    if set(theta.tc) != pairs or set(theta.tv) != pairs:
        return False
    priced = {s.name for s in data.states if s.price != 0.0}
    return set(theta.price) == priced


def build_instance(data: StnData, theta: SchedulingTheta, literal_a8: bool = False):
    """Instantiate the scheduling MILP for one theta.

    Returns (model, BinaryIndex).  With literal_a8 the duration row keeps
    the printed form t^f = t^s + T^c m with the variable term as a bare
    constant; the default multiplies the variable term by the batch size.
    """
    problems = validate_data(data)
    if problems:
        raise ValueError("invalid STN data: " + "; ".join(problems))
    if not _theta_matches(data, theta):
        raise ValueError("theta keys do not match the data's pairs and priced states")

    E = data.events
    H = data.horizon
    pairs = task_unit_pairs(data)
    units = {u.name: u for u in data.units}
    tasks = {t.name: t for t in data.tasks}
    unit_pairs = {u.name: [pr for pr in pairs if pr[1] == u.name] for u in data.units}
    priced = [s for s in data.states if s.price != 0.0]

    vars = []
    entries = []
    m_pos, u_pos = {}, {}
    for n in range(E):
        for t, j in pairs:
            m_pos[(t, j, n)] = len(vars)
            entries.append((KIND_TASK, f"{t}@{j}", n))
            vars.append(VarSpec(f"m[{t}@{j},{n}]", BINARY, 0.0, 1.0))
        for u in data.units:
            u_pos[(u.name, n)] = len(vars)
            entries.append((KIND_UNIT, u.name, n))
            vars.append(VarSpec(f"u[{u.name},{n}]", BINARY, 0.0, 1.0))
    index = BinaryIndex(tuple(entries))

    p_pos, s_pos, sa_pos, ts_pos, tf_pos = {}, {}, {}, {}, {}
    for n in range(E):
        for t, j in pairs:
            p_pos[(t, j, n)] = len(vars)
            vars.append(VarSpec(f"p[{t}@{j},{n}]", CONTINUOUS, 0.0, units[j].capacity))
    for n in range(1, E):
        for s in priced:
            s_pos[(s.name, n)] = len(vars)
            vars.append(VarSpec(f"s[{s.name},{n}]", CONTINUOUS, 0.0, INF))
    for n in range(E):
        for s in data.states:
            sa_pos[(s.name, n)] = len(vars)
            vars.append(VarSpec(f"sa[{s.name},{n}]", CONTINUOUS, 0.0, INF))
    for n in range(E):
        for t, j in pairs:
            ts_pos[(t, j, n)] = len(vars)
            vars.append(VarSpec(f"ts[{t}@{j},{n}]", CONTINUOUS, 0.0, INF))
    for n in range(E):
        for t, j in pairs:
            tf_pos[(t, j, n)] = len(vars)
            vars.append(VarSpec(f"tf[{t}@{j},{n}]", CONTINUOUS, 0.0, INF))

    rows = []

    # one task per unit per event point
    for n in range(E):
        for u in data.units:
            coeffs = {m_pos[(t, j, n)]: 1.0 for t, j in unit_pairs[u.name]}
            coeffs[u_pos[(u.name, n)]] = -1.0
            rows.append(LinConstraint(coeffs, EQ, 0.0, f"alloc[{u.name},{n}]"))

    # initial inventory
    for s in data.states:
        rows.append(LinConstraint({sa_pos[(s.name, 0)]: 1.0}, EQ, s.initial, f"init[{s.name}]"))

    # batch size limited by available consumed material
    for n in range(E):
        for t, j in pairs:
            for st, _ in tasks[t].consumed:
                rows.append(
                    LinConstraint(
                        {p_pos[(t, j, n)]: 1.0, sa_pos[(st, n)]: -1.0},
                        LE,
                        0.0,
                        f"avail[{t}@{j},{st},{n}]",
                    )
                )

    # batch size limited by unit capacity when the task runs
    for n in range(E):
        for t, j in pairs:
            rows.append(
                LinConstraint(
                    {p_pos[(t, j, n)]: 1.0, m_pos[(t, j, n)]: -units[j].capacity},
                    LE,
                    0.0,
                    f"cap[{t}@{j},{n}]",
                )
            )

    # finite storage
    for n in range(E):
        for s in data.states:
            if s.storage_cap < INF:
                rows.append(
                    LinConstraint({sa_pos[(s.name, n)]: 1.0}, LE, s.storage_cap, f"store[{s.name},{n}]")
                )

    # material balance from the second event point on
    for n in range(1, E):
        for s in data.states:
            coeffs = {sa_pos[(s.name, n)]: 1.0, sa_pos[(s.name, n - 1)]: -1.0}
            if (s.name, n) in s_pos:
                coeffs[s_pos[(s.name, n)]] = 1.0
            for t, j in pairs:
                for st, pr in tasks[t].produced:
                    if st == s.name:
                        coeffs[p_pos[(t, j, n - 1)]] = coeffs.get(p_pos[(t, j, n - 1)], 0.0) - pr
                for st, pr in tasks[t].consumed:
                    if st == s.name:
                        coeffs[p_pos[(t, j, n)]] = coeffs.get(p_pos[(t, j, n)], 0.0) - pr
            rows.append(LinConstraint(coeffs, EQ, 0.0, f"balance[{s.name},{n}]"))

    # processing duration
    for n in range(E):
        for t, j in pairs:
            coeffs = {
                tf_pos[(t, j, n)]: 1.0,
                ts_pos[(t, j, n)]: -1.0,
                m_pos[(t, j, n)]: -theta.tc[(t, j)],
            }
            if literal_a8:
                rows.append(LinConstraint(coeffs, EQ, theta.tv[(t, j)], f"duration[{t}@{j},{n}]"))
            else:
                coeffs[p_pos[(t, j, n)]] = -theta.tv[(t, j)]
                rows.append(LinConstraint(coeffs, EQ, 0.0, f"duration[{t}@{j},{n}]"))

    # a started task must finish before the same pair starts again
    for n in range(E - 1):
        for t, j in pairs:
            rows.append(
                LinConstraint(
                    {
                        ts_pos[(t, j, n + 1)]: 1.0,
                        tf_pos[(t, j, n)]: -1.0,
                        m_pos[(t, j, n)]: -H,
                        u_pos[(j, n)]: -H,
                    },
                    GE,
                    -2.0 * H,
                    f"seq-same[{t}@{j},{n}]",
                )
            )

    # event times move forward
    for n in range(E - 1):
        for t, j in pairs:
            rows.append(
                LinConstraint(
                    {ts_pos[(t, j, n + 1)]: 1.0, ts_pos[(t, j, n)]: -1.0},
                    GE,
                    0.0,
                    f"mono-start[{t}@{j},{n}]",
                )
            )
    for n in range(E - 1):
        for t, j in pairs:
            rows.append(
                LinConstraint(
                    {tf_pos[(t, j, n + 1)]: 1.0, tf_pos[(t, j, n)]: -1.0},
                    GE,
                    0.0,
                    f"mono-finish[{t}@{j},{n}]",
                )
            )

    # different tasks in the same unit
    for n in range(E - 1):
        for u in data.units:
            for t, j in unit_pairs[u.name]:
                for t2, j2 in unit_pairs[u.name]:
                    if (t, j) == (t2, j2):
                        continue
                    rows.append(
                        LinConstraint(
                            {
                                ts_pos[(t, j, n + 1)]: 1.0,
                                tf_pos[(t2, j2, n)]: -1.0,
                                m_pos[(t2, j2, n)]: -H,
                                u_pos[(j2, n)]: -H,
                            },
                            GE,
                            -2.0 * H,
                            f"seq-unit[{t}@{j},{t2},{n}]",
                        )
                    )

    # tasks across different units
    for n in range(E - 1):
        for u in data.units:
            for u2 in data.units:
                if u.name == u2.name:
                    continue
                for t, j in unit_pairs[u.name]:
                    for t2, j2 in unit_pairs[u2.name]:
                        rows.append(
                            LinConstraint(
                                {
                                    ts_pos[(t, j, n + 1)]: 1.0,
                                    tf_pos[(t2, j2, n)]: -1.0,
                                    m_pos[(t2, j2, n)]: -H,
                                    u_pos[(j2, n)]: -H,
                                },
                                GE,
                                -2.0 * H,
                                f"seq-cross[{t}@{j},{t2}@{j2},{n}]",
                            )
                        )

    # a start must wait for the unit's accumulated busy time
    for n in range(E - 1):
        for t, j in pairs:
            coeffs = {ts_pos[(t, j, n + 1)]: 1.0}
            for n2 in range(n + 1):
                for t2, j2 in unit_pairs[j]:
                    coeffs[tf_pos[(t2, j2, n2)]] = coeffs.get(tf_pos[(t2, j2, n2)], 0.0) - 1.0
                    coeffs[ts_pos[(t2, j2, n2)]] = coeffs.get(ts_pos[(t2, j2, n2)], 0.0) + 1.0
            rows.append(LinConstraint(coeffs, GE, 0.0, f"seq-busy[{t}@{j},{n}]"))

    # everything happens inside the horizon
    for n in range(E):
        for t, j in pairs:
            rows.append(LinConstraint({tf_pos[(t, j, n)]: 1.0}, LE, H, f"horizon-f[{t}@{j},{n}]"))
    for n in range(E):
        for t, j in pairs:
            rows.append(LinConstraint({ts_pos[(t, j, n)]: 1.0}, LE, H, f"horizon-s[{t}@{j},{n}]"))

    objective = {pos: theta.price[name] for (name, _), pos in s_pos.items()}

    model = MilpModel.build(tuple(vars), tuple(rows), objective, MAX)
    return model, index


# ----- file formats ----------------------------------------------------------


def encode_data(data: StnData) -> dict:
    return {
        "format": DATA_TAG,
        "horizon": fnum(data.horizon),
        "events": data.events,
        "units": [
            {"name": u.name, "capacity": fnum(u.capacity), "tasks": list(u.tasks), "mean_time": fnum(u.mean_time)}
            for u in data.units
        ],
        "states": [
            {"name": s.name, "storage_cap": fnum(s.storage_cap), "initial": fnum(s.initial), "price": fnum(s.price)}
            for s in data.states
        ],
        "tasks": [
            {
                "name": t.name,
                "consumed": [[st, fnum(pr)] for st, pr in t.consumed],
                "produced": [[st, fnum(pr)] for st, pr in t.produced],
            }
            for t in data.tasks
        ],
    }


def decode_data(doc: dict) -> StnData:
    if doc.get("format") != DATA_TAG:
        raise ValueError(f"unsupported data format {doc.get('format')!r}")
    units = tuple(
        UnitSpec(d["name"], pnum(d["capacity"]), tuple(d["tasks"]), pnum(d["mean_time"]))
        for d in doc["units"]
    )
    states = tuple(
        StateSpec(d["name"], pnum(d["storage_cap"]), pnum(d["initial"]), pnum(d["price"]))
        for d in doc["states"]
    )
    tasks = tuple(
        TaskSpec(
            d["name"],
            tuple((st, pnum(pr)) for st, pr in d["consumed"]),
            tuple((st, pnum(pr)) for st, pr in d["produced"]),
        )
        for d in doc["tasks"]
    )
    return StnData(units, states, tasks, pnum(doc["horizon"]), int(doc["events"]))


def encode_theta(theta: SchedulingTheta) -> dict:
    return {
        "format": THETA_TAG,
        "tc": [[t, j, fnum(v)] for (t, j), v in sorted(theta.tc.items())],
        "tv": [[t, j, fnum(v)] for (t, j), v in sorted(theta.tv.items())],
        "price": [[s, fnum(v)] for s, v in sorted(theta.price.items())],
    }


def decode_theta(doc: dict) -> SchedulingTheta:
    if doc.get("format") != THETA_TAG:
        raise ValueError(f"unsupported theta format {doc.get('format')!r}")
    tc = {(t, j): pnum(v) for t, j, v in doc["tc"]}
    tv = {(t, j): pnum(v) for t, j, v in doc["tv"]}
    price = {s: pnum(v) for s, v in doc["price"]}
    return SchedulingTheta(tc, tv, price)


def write_data(data: StnData, path) -> None:
    dump_json(encode_data(data), path)


def read_data(path) -> StnData:
    return decode_data(load_json(path))


def write_theta(theta: SchedulingTheta, path) -> None:
    dump_json(encode_theta(theta), path)


def read_theta(path) -> SchedulingTheta:
    return decode_theta(load_json(path))
