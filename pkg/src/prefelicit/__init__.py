"""Robust pairwise preference elicitation over simulated triage policies."""

from .engine import (
    AlternativeSet,
    LookupTable,
    NoiseParams,
    Query,
    Recommendation,
    build_lookup_table,
    fallback_query,
    gamma_schedule,
    recommend,
    select_queries_random,
    select_query_robust,
)
from .errors import (
    DataValidationError,
    InfeasibleHistoryError,
    NumericalFailure,
    PrefElicitError,
)
from .lp import LinearProgram, LpSolution, LpStatus, solve_lp
from .uncertainty import (
    FeasibilityProgram,
    apply_history,
    initial_uncertainty,
    worst_case_utilities,
    worst_case_utility,
)

__version__ = "0.1.0"

__all__ = [
    "AlternativeSet",
    "DataValidationError",
    "FeasibilityProgram",
    "InfeasibleHistoryError",
    "LinearProgram",
    "LookupTable",
    "LpSolution",
    "LpStatus",
    "NoiseParams",
    "NumericalFailure",
    "PrefElicitError",
    "Query",
    "Recommendation",
    "apply_history",
    "build_lookup_table",
    "fallback_query",
    "gamma_schedule",
    "initial_uncertainty",
    "recommend",
    "select_queries_random",
    "select_query_robust",
    "solve_lp",
    "worst_case_utilities",
    "worst_case_utility",
]
