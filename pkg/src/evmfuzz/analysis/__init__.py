from .coverage import CoverageStore, OpenBranch
from .expr import EvalError, Term, apply, const, evaluate, opaque, var, variables
from .slots import SlotKey, StorageAccess, extract_storage_accesses, read_set, resolve_key, write_set
from .solver import (
    ExternalSolver,
    InternalSolver,
    SmtLibWriter,
    SolveResult,
    SolverBridge,
    branch_script,
    detect_solver,
    parse_model,
)
from .taint import (
    BLOCK_KINDS,
    FUZZABLE_KINDS,
    CallAnnotation,
    OverflowEvent,
    PathConstraint,
    StoreAnnotation,
    TaintReport,
    TaintTracker,
    parse_var,
    pool_tag_key,
    taint_individual,
    var_kinds,
)
from .termination import purge_reverting_values

__all__ = [
    "BLOCK_KINDS",
    "CallAnnotation",
    "CoverageStore",
    "EvalError",
    "ExternalSolver",
    "FUZZABLE_KINDS",
    "InternalSolver",
    "OpenBranch",
    "OverflowEvent",
    "PathConstraint",
    "SlotKey",
    "SmtLibWriter",
    "SolveResult",
    "SolverBridge",
    "StorageAccess",
    "StoreAnnotation",
    "TaintReport",
    "TaintTracker",
    "Term",
    "apply",
    "branch_script",
    "const",
    "detect_solver",
    "evaluate",
    "extract_storage_accesses",
    "opaque",
    "parse_model",
    "parse_var",
    "pool_tag_key",
    "purge_reverting_values",
    "read_set",
    "resolve_key",
    "taint_individual",
    "var",
    "var_kinds",
    "variables",
    "write_set",
]
