"""Learn-to-tighten toolkit for parametric MILPs.

Train an autoencoder on optimal binary solutions of historical
instances, turn its sigmoid decoder into big-M cutting planes, and
solve tightened instances with the built-in simplex/branch-and-bound
solver.
"""

from .model import (
    BINARY,
    CONTINUOUS,
    EQ,
    GE,
    LE,
    MAX,
    MIN,
    Evaluation,
    LinConstraint,
    MilpModel,
    VarSpec,
    decode_instance,
    encode_instance,
    evaluate,
    read_instance,
    validate,
    write_instance,
)
from .simplex import LpOutcome, SolverFailure, feasible_point, solve_lp
from .branch_bound import MilpOutcome, SolveConfig, solve_milp
from .stn import (
    BinaryIndex,
    PerturbSpec,
    SchedulingTheta,
    StnData,
    build_instance,
    default_data,
    nominal_theta,
    perturb_theta,
    read_data,
    read_theta,
    task_unit_pairs,
    validate_data,
    write_data,
    write_theta,
)

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "EQ",
    "GE",
    "LE",
    "MAX",
    "MIN",
    "Evaluation",
    "LinConstraint",
    "MilpModel",
    "VarSpec",
    "decode_instance",
    "encode_instance",
    "evaluate",
    "read_instance",
    "validate",
    "write_instance",
    "LpOutcome",
    "SolverFailure",
    "feasible_point",
    "solve_lp",
    "MilpOutcome",
    "SolveConfig",
    "solve_milp",
    "BinaryIndex",
    "PerturbSpec",
    "SchedulingTheta",
    "StnData",
    "build_instance",
    "default_data",
    "nominal_theta",
    "perturb_theta",
    "read_data",
    "read_theta",
    "task_unit_pairs",
    "validate_data",
    "write_data",
    "write_theta",
]

__version__ = "0.1.0"
