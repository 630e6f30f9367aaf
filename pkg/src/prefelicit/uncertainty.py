"""Polyhedral utility uncertainty and its noisy-response updates.

The utility vector u lives on the unit simplex in R^J. Each answered
pairwise query adds a slack variable eps_k >= 0 and one or two rows tying
u to the reported preference, with a single shared budget sum(eps) <= gamma
over the whole history. The feasible (u, eps) region, projected onto u,
is the set of utility vectors still consistent with the answers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DataValidationError
from .lp import EQ, GE, LE, ConstraintRow, LpStatus, SimplexSolver

if TYPE_CHECKING:
    from .engine import AlternativeSet, Query

RESPONSES = (-1, 0, 1)


@dataclass(frozen=True)
class FeasibilityProgram:
    """Linear system over (u, eps) for one elicitation state.

    Rows are materialized in a fixed order: J nonnegativity rows for u,
    the simplex equality, one nonnegativity row per eps, the shared
    budget row, then the per-query rows in history order (indifference
    contributes two rows).
    """

    dimension: int
    noise_terms: int
    gamma: float
    indifferent_count: int
    rows: tuple[ConstraintRow, ...]

    def __post_init__(self) -> None:
        expected = 2 + self.dimension + 2 * self.noise_terms + self.indifferent_count
        if len(self.rows) != expected:
            raise DataValidationError(
                f"row count {len(self.rows)} does not match construction "
                f"(expected {expected})"
            )
        if self.gamma < 0.0:
            raise DataValidationError("noise budget must be nonnegative")

    @property
    def n_variables(self) -> int:
        return self.dimension + self.noise_terms

    def solver_rows(self) -> tuple[ConstraintRow, ...]:
        """Rows without the plain nonnegativity ones.

        Nonnegativity is handed to the solver as variable bounds instead,
        which keeps the tableau small; the feasible set is identical.
        """
        j, k = self.dimension, self.noise_terms
        return (self.rows[j],) + self.rows[j + 1 + k :]


def _nonneg_row(n: int, index: int) -> ConstraintRow:
    coeffs = [0.0] * n
    coeffs[index] = 1.0
    return ConstraintRow(tuple(coeffs), GE, 0.0)


def initial_uncertainty(dimension: int) -> FeasibilityProgram:
    """The unit simplex over u, with no responses recorded yet."""
    if dimension < 1:
        raise DataValidationError("dimension must be at least 1")
    rows = [_nonneg_row(dimension, j) for j in range(dimension)]
    rows.append(ConstraintRow((1.0,) * dimension, EQ, 1.0))
    rows.append(ConstraintRow((0.0,) * dimension, LE, 0.0))  # empty budget
    return FeasibilityProgram(
        dimension=dimension,
        noise_terms=0,
        gamma=0.0,
        indifferent_count=0,
        rows=tuple(rows),
    )


def apply_history(
    base: FeasibilityProgram,
    alternatives: "AlternativeSet",
    history: Sequence[tuple["Query", int]],
    gamma: float,
) -> FeasibilityProgram:
    """Rebuild the constraint system for a full response history.

    ``base`` must be history-free (as returned by initial_uncertainty);
    it is never modified. With an empty history and gamma = 0 the result
    equals ``base``.
    """
    if base.noise_terms != 0:
        raise DataValidationError("base program must be history-free")
    if gamma < 0.0:
        raise DataValidationError("noise budget must be nonnegative")
    j = base.dimension
    if alternatives.dimension != j:
        raise DataValidationError(
            f"alternatives have dimension {alternatives.dimension}, expected {j}"
        )
    kappa = len(history)
    n = j + kappa

    rows = [_nonneg_row(n, idx) for idx in range(j)]
    rows.append(ConstraintRow((1.0,) * j + (0.0,) * kappa, EQ, 1.0))
    for k in range(kappa):
        rows.append(_nonneg_row(n, j + k))
    rows.append(ConstraintRow((0.0,) * j + (1.0,) * kappa, LE, float(gamma)))

    indifferent = 0
    for k, (query, response) in enumerate(history):
        if response not in RESPONSES:
            raise DataValidationError(f"response must be one of {RESPONSES}")
        delta = alternatives.vector(query.first) - alternatives.vector(query.second)
        eps = np.zeros(kappa)
        eps[k] = 1.0
        ge_row = ConstraintRow(tuple(delta) + tuple(eps), GE, 0.0)
        le_row = ConstraintRow(tuple(delta) + tuple(-eps), LE, 0.0)
        if response == 1:
            rows.append(ge_row)
        elif response == -1:
            rows.append(le_row)
        else:
            rows.append(ge_row)
            rows.append(le_row)
            indifferent += 1

    return FeasibilityProgram(
        dimension=j,
        noise_terms=kappa,
        gamma=float(gamma),
        indifferent_count=indifferent,
        rows=tuple(rows),
    )


def feasibility_solver(program: FeasibilityProgram) -> SimplexSolver:
    return SimplexSolver(
        program.solver_rows(), lower_bounds=[0.0] * program.n_variables
    )


def worst_case_utility(
    x: Sequence[float], program: FeasibilityProgram
) -> float | None:
    """min u.x over the program's feasible set; None when the set is empty."""
    values = worst_case_utilities([x], program)
    return None if values is None else values[0]


def worst_case_utilities(
    xs: Sequence[Sequence[float]], program: FeasibilityProgram
) -> list[float] | None:
    """Worst-case utilities of many alternatives over one feasible set.

    Phase 1 of the simplex runs once and each objective restarts phase 2
    from the shared feasible basis. Returns None when the set is empty.
    """
    for x in xs:
        if len(x) != program.dimension:
            raise DataValidationError(
                f"alternative has dimension {len(x)}, expected {program.dimension}"
            )
    solver = feasibility_solver(program)
    if not solver.find_feasible():
        return None
    pad = (0.0,) * program.noise_terms
    out: list[float] = []
    for x in xs:
        status, value, _ = solver.minimize(tuple(float(v) for v in x) + pad)
        # The feasible set sits inside the simplex cross a bounded eps
        # box, so phase 2 cannot be unbounded.
        assert status is LpStatus.OPTIMAL and value is not None
        out.append(value)
    return out
