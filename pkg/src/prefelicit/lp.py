"""Dense linear programming for small instances.

Two-phase primal simplex on the full tableau. Instances here are tiny
(tens of variables and rows), so the implementation optimizes for
determinism and auditability rather than speed: a fixed pivot rule
(most-negative reduced cost, lowest column index on ties) that switches
permanently to Bland's rule after a run of degenerate pivots, a hard
iteration cap, and explicit feasibility certification of the reported
point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataValidationError, NumericalFailure

FEASIBILITY_TOL = 1e-9
REPORT_TOL = 1e-7
MAX_ITERATIONS = 10_000
_DEGENERATE_RUN_LIMIT = 30

GE = ">="
LE = "<="
EQ = "="
_RELATIONS = (GE, LE, EQ)


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class ConstraintRow:
    """One linear constraint: coefficients . x  <relation>  rhs."""

    coefficients: tuple[float, ...]
    relation: str
    rhs: float

    def __post_init__(self) -> None:
        if self.relation not in _RELATIONS:
            raise DataValidationError(f"unknown relation {self.relation!r}")
        if not math.isfinite(self.rhs):
            raise DataValidationError("constraint rhs must be finite")


@dataclass(frozen=True)
class LinearProgram:
    """min objective . x  subject to rows, x_j >= lower_bounds[j].

    A lower bound of -inf marks a free variable.
    """

    objective: tuple[float, ...]
    rows: tuple[ConstraintRow, ...]
    lower_bounds: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.objective)
        if n == 0:
            raise DataValidationError("program needs at least one variable")
        if len(self.lower_bounds) != n:
            raise DataValidationError(
                f"lower_bounds has {len(self.lower_bounds)} entries, expected {n}"
            )
        if not all(math.isfinite(c) for c in self.objective):
            raise DataValidationError("objective coefficients must be finite")
        for i, row in enumerate(self.rows):
            if len(row.coefficients) != n:
                raise DataValidationError(
                    f"row {i} has {len(row.coefficients)} coefficients, expected {n}"
                )

    @classmethod
    def build(
        cls,
        objective: Sequence[float],
        rows: Iterable[tuple[Sequence[float], str, float]],
        lower_bounds: Sequence[float] | None = None,
    ) -> "LinearProgram":
        obj = tuple(float(c) for c in objective)
        if lower_bounds is None:
            lower_bounds = [0.0] * len(obj)
        return cls(
            objective=obj,
            rows=tuple(
                ConstraintRow(tuple(float(a) for a in coeffs), rel, float(rhs))
                for coeffs, rel, rhs in rows
            ),
            lower_bounds=tuple(float(b) for b in lower_bounds),
        )


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    value: float | None = None
    point: tuple[float, ...] | None = None


class SimplexSolver:
    """Reusable solver for one constraint system and many objectives.

    Phase 1 runs once; ``minimize`` restarts phase 2 from the stored
    feasible basis for each objective. This is the hot path of the
    query-selection enumeration, where the same polyhedron is minimized
    against every alternative's feature vector.
    """

    def __init__(
        self,
        rows: Sequence[ConstraintRow],
        lower_bounds: Sequence[float],
    ) -> None:
        self._n_orig = len(lower_bounds)
        self._build(rows, lower_bounds)
        self._feasible: bool | None = None
        self._snapshot: tuple[np.ndarray, list[int]] | None = None

    # -- construction -------------------------------------------------

    def _build(
        self, rows: Sequence[ConstraintRow], lower_bounds: Sequence[float]
    ) -> None:
        # Map original variables onto nonnegative columns: finite lower
        # bounds are shifted out, free variables split into x+ - x-.
        col_of: list[tuple] = []
        ncols = 0
        for lb in lower_bounds:
            if math.isfinite(lb):
                col_of.append(("shift", ncols, lb))
                ncols += 1
            else:
                col_of.append(("split", ncols, ncols + 1))
                ncols += 2
        self._col_of = col_of
        self._n_struct = ncols

        m = len(rows)
        A = np.zeros((m, ncols))
        b = np.zeros(m)
        rels = []
        for i, row in enumerate(rows):
            rhs = row.rhs
            for j, a in enumerate(row.coefficients):
                if a == 0.0:
                    continue
                kind = col_of[j]
                if kind[0] == "shift":
                    A[i, kind[1]] += a
                    rhs -= a * kind[2]
                else:
                    A[i, kind[1]] += a
                    A[i, kind[2]] -= a
            rel = row.relation
            if rhs < 0.0:
                A[i] = -A[i]
                rhs = -rhs
                rel = {LE: GE, GE: LE, EQ: EQ}[rel]
            rels.append(rel)
            b[i] = rhs

        n_slack = sum(1 for r in rels if r != EQ)
        n_art = sum(1 for r in rels if r != LE)
        total = ncols + n_slack + n_art
        T = np.zeros((m, total + 1))
        T[:, :ncols] = A
        T[:, -1] = b

        is_artificial = np.zeros(total, dtype=bool)
        basis: list[int] = [-1] * m
        col = ncols
        for i, rel in enumerate(rels):
            if rel == LE:
                T[i, col] = 1.0
                basis[i] = col
                col += 1
            elif rel == GE:
                T[i, col] = -1.0
                col += 1
        for i, rel in enumerate(rels):
            if rel != LE:
                T[i, col] = 1.0
                is_artificial[col] = True
                basis[i] = col
                col += 1
        assert col == total and all(j >= 0 for j in basis)

        self._T = T
        self._basis = basis
        self._is_artificial = is_artificial
        self._b_scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)

    # -- core iteration -----------------------------------------------

    def _run(self, costs: np.ndarray, allow_artificial: bool) -> str:
        T = self._T
        basis = self._basis
        blocked = None if allow_artificial else self._is_artificial
        bland = False
        degenerate_run = 0
        for _ in range(MAX_ITERATIONS):
            c_b = costs[basis]
            reduced = costs - c_b @ T[:, :-1]
            candidates = reduced < -FEASIBILITY_TOL
            if blocked is not None:
                candidates &= ~blocked
            if not candidates.any():
                return "optimal"
            if bland:
                j = int(np.flatnonzero(candidates)[0])
            else:
                masked = np.where(candidates, reduced, np.inf)
                j = int(np.argmin(masked))

            column = T[:, j]
            positive = column > FEASIBILITY_TOL
            if not positive.any():
                return "unbounded"
            rows_idx = np.flatnonzero(positive)
            ratios = T[rows_idx, -1] / column[rows_idx]
            best = float(ratios.min())
            ties = rows_idx[ratios <= best + 1e-12]
            # Leaving row: smallest basic-variable index among the tied
            # minimum ratios (Bland-compatible, deterministic).
            r = int(min(ties, key=lambda i: basis[i]))

            if best < 1e-12:
                degenerate_run += 1
                if degenerate_run >= _DEGENERATE_RUN_LIMIT:
                    bland = True
            else:
                degenerate_run = 0

            pivot = T[r, j]
            T[r] /= pivot
            factors = T[:, j].copy()
            factors[r] = 0.0
            T -= np.outer(factors, T[r])
            basis[r] = j
        raise NumericalFailure(
            f"simplex did not converge within {MAX_ITERATIONS} iterations"
        )

    # -- public API ---------------------------------------------------

    def find_feasible(self) -> bool:
        """Phase 1. Returns False when the system has no solution."""
        if self._feasible is not None:
            return self._feasible
        ncols = self._T.shape[1] - 1
        costs = np.zeros(ncols)
        costs[self._is_artificial] = 1.0
        status = self._run(costs, allow_artificial=True)
        assert status == "optimal"  # phase 1 objective is bounded below by 0
        value = float(costs[self._basis] @ self._T[:, -1])
        if value > FEASIBILITY_TOL * self._b_scale:
            self._feasible = False
            return False
        self._evict_artificials()
        self._snapshot = (self._T.copy(), list(self._basis))
        self._feasible = True
        return True

    def _evict_artificials(self) -> None:
        # Pivot zero-valued artificials out of the basis; rows where no
        # structural pivot exists are redundant and get dropped.
        T = self._T
        drop: list[int] = []
        for r in range(T.shape[0]):
            col = self._basis[r]
            if not self._is_artificial[col]:
                continue
            structural = np.flatnonzero(
                (np.abs(T[r, : self._T.shape[1] - 1]) > FEASIBILITY_TOL)
                & ~self._is_artificial
            )
            if structural.size == 0:
                drop.append(r)
                continue
            j = int(structural[0])
            pivot = T[r, j]
            T[r] /= pivot
            factors = T[:, j].copy()
            factors[r] = 0.0
            T -= np.outer(factors, T[r])
            self._basis[r] = j
        if drop:
            keep = [r for r in range(T.shape[0]) if r not in drop]
            self._T = T[keep]
            self._basis = [self._basis[r] for r in keep]

    def minimize(self, objective: Sequence[float]) -> tuple[LpStatus, float | None, np.ndarray | None]:
        """Phase 2 for one objective, from the stored feasible basis."""
        if not self.find_feasible():
            return LpStatus.INFEASIBLE, None, None
        assert self._snapshot is not None
        T0, basis0 = self._snapshot
        self._T = T0.copy()
        self._basis = list(basis0)

        ncols = self._T.shape[1] - 1
        costs = np.zeros(ncols)
        for c, kind in zip(objective, self._col_of):
            if kind[0] == "shift":
                costs[kind[1]] += c
            else:
                costs[kind[1]] += c
                costs[kind[2]] -= c
        status = self._run(costs, allow_artificial=False)
        if status == "unbounded":
            return LpStatus.UNBOUNDED, None, None

        y = np.zeros(ncols)
        y[self._basis] = self._T[:, -1]
        x = np.empty(self._n_orig)
        for j, kind in enumerate(self._col_of):
            if kind[0] == "shift":
                x[j] = y[kind[1]] + kind[2]
            else:
                x[j] = y[kind[1]] - y[kind[2]]
        value = float(np.dot(np.asarray(objective, dtype=float), x))
        return LpStatus.OPTIMAL, value, x


def _certify(lp: LinearProgram, point: np.ndarray) -> None:
    for i, row in enumerate(lp.rows):
        lhs = float(np.dot(row.coefficients, point))
        ok = (
            lhs >= row.rhs - REPORT_TOL
            if row.relation == GE
            else lhs <= row.rhs + REPORT_TOL
            if row.relation == LE
            else abs(lhs - row.rhs) <= REPORT_TOL
        )
        if not ok:
            raise NumericalFailure(
                f"reported point violates row {i}: {lhs} {row.relation} {row.rhs}"
            )
    for j, lb in enumerate(lp.lower_bounds):
        if math.isfinite(lb) and point[j] < lb - REPORT_TOL:
            raise NumericalFailure(f"reported point violates bound on variable {j}")


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Minimize ``lp.objective`` over the rows and bounds of ``lp``.

    Deterministic for identical input. Raises NumericalFailure if the
    pivot cap is hit or the reported point fails certification.
    """
    solver = SimplexSolver(lp.rows, lp.lower_bounds)
    if not solver.find_feasible():
        return LpSolution(LpStatus.INFEASIBLE)
    status, value, point = solver.minimize(lp.objective)
    if status is LpStatus.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED)
    assert point is not None and value is not None
    _certify(lp, point)
    return LpSolution(LpStatus.OPTIMAL, value, tuple(float(v) for v in point))
