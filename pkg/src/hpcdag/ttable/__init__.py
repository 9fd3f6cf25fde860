"""Time-triggered schedule tables built from mixed-integer models."""

from .model import (
    ILPModel,
    Method,
    Row,
    UnsupportedNodeKind,
    Var,
    build_ilp,
    exec_predecessors,
    linearize_disjunction,
    nb_intervals,
    to_lp,
)
from .simplex import LPResult, solve_lp
from .solve import (
    BINARY_CAP,
    Budget,
    Solution,
    SolverTimeout,
    TooManyBinaries,
    solve_builtin,
    solve_exhaustive,
    solve_highs,
)
from .table import (
    Reservation,
    TimeTable,
    TTResult,
    Violation,
    construct_timetable,
    default_demand,
    extract_table,
    validate_timetable,
)

__all__ = [
    "BINARY_CAP",
    "Budget",
    "ILPModel",
    "LPResult",
    "Method",
    "Reservation",
    "Row",
    "Solution",
    "SolverTimeout",
    "TTResult",
    "TimeTable",
    "TooManyBinaries",
    "UnsupportedNodeKind",
    "Var",
    "Violation",
    "build_ilp",
    "construct_timetable",
    "default_demand",
    "exec_predecessors",
    "extract_table",
    "linearize_disjunction",
    "nb_intervals",
    "solve_builtin",
    "solve_exhaustive",
    "solve_highs",
    "solve_lp",
    "to_lp",
    "validate_timetable",
]
