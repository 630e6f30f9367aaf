"""Built-in oracle checks runnable from the command line.

Each check pits a production path against a brute-force alternative
coded here from first principles: LP solves against polytope vertex
enumeration, the adaptive query objective against a plain four-level
loop, and the noise budget against a series-based error function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .engine import (
    AlternativeSet,
    NoiseParams,
    Query,
    all_queries,
    gamma_schedule,
    select_query_robust,
)
from .lp import LinearProgram, LpStatus, solve_lp
from .uncertainty import apply_history, initial_uncertainty, worst_case_utilities


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _vertices(A_ub: np.ndarray, b_ub: np.ndarray) -> np.ndarray:
    m, n = A_ub.shape
    combos = np.array(list(itertools.combinations(range(m), n)))
    mats = A_ub[combos]
    rhs = b_ub[combos]
    keep = np.abs(np.linalg.det(mats)) > 1e-12
    if not keep.any():
        return np.empty((0, n))
    points = np.linalg.solve(mats[keep], rhs[keep][:, :, None])[:, :, 0]
    feasible = (A_ub @ points.T <= b_ub[:, None] + 1e-9).all(axis=0)
    return points[feasible]


def _min_over_vertices(c, A_ub, b_ub) -> float | None:
    points = _vertices(np.asarray(A_ub, float), np.asarray(b_ub, float))
    if points.shape[0] == 0:
        return None
    return float(np.min(points @ np.asarray(c, float)))


def _lp_as_inequalities(lp: LinearProgram):
    rows, rhs = [], []
    for row in lp.rows:
        a = np.asarray(row.coefficients, float)
        if row.relation in ("<=", "="):
            rows.append(a)
            rhs.append(row.rhs)
        if row.relation in (">=", "="):
            rows.append(-a)
            rhs.append(-row.rhs)
    for j, lb in enumerate(lp.lower_bounds):
        if math.isfinite(lb):
            e = np.zeros(len(lp.objective))
            e[j] = -1.0
            rows.append(e)
            rhs.append(-lb)
    return np.array(rows), np.array(rhs)


def check_lp_against_vertex_enumeration(instances: int = 40, seed: int = 2718) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 5))
        box = float(rng.uniform(1.0, 4.0))
        interior = rng.uniform(0.1, 0.9, size=n) * box
        rows = [(tuple(np.eye(n)[j]), "<=", box) for j in range(n)]
        for _ in range(int(rng.integers(1, 7))):
            a = rng.uniform(-1.0, 1.0, size=n)
            rows.append((tuple(a), "<=", float(a @ interior) + float(rng.uniform(0.05, 1.0))))
        lp = LinearProgram.build(tuple(rng.uniform(-1, 1, size=n)), rows)
        sol = solve_lp(lp)
        if sol.status is not LpStatus.OPTIMAL:
            return CheckResult("lp-vs-vertex-enumeration", False, "unexpected non-optimal status")
        expected = _min_over_vertices(lp.objective, *_lp_as_inequalities(lp))
        worst = max(worst, abs(sol.value - expected))
        if worst > 1e-6:
            return CheckResult(
                "lp-vs-vertex-enumeration", False, f"value off by {worst:.2e}"
            )
    return CheckResult(
        "lp-vs-vertex-enumeration", True, f"{instances} instances, max |diff| {worst:.2e}"
    )


def _oracle_wc(features, history, gamma, x):
    j = features.shape[1]
    kappa = len(history)
    n = j + kappa
    rows, rhs = [], []
    for idx in range(j):
        e = np.zeros(n)
        e[idx] = -1.0
        rows.append(e)
        rhs.append(0.0)
    ones = np.zeros(n)
    ones[:j] = 1.0
    rows += [ones, -ones]
    rhs += [1.0, -1.0]
    for k in range(kappa):
        e = np.zeros(n)
        e[j + k] = -1.0
        rows.append(e)
        rhs.append(0.0)
    budget = np.zeros(n)
    budget[j:] = 1.0
    rows.append(budget)
    rhs.append(gamma)
    for k, (query, s) in enumerate(history):
        delta = np.zeros(n)
        delta[:j] = features[query.first - 1] - features[query.second - 1]
        eps = np.zeros(n)
        eps[j + k] = 1.0
        if s >= 0:
            rows.append(-(delta + eps))
            rhs.append(0.0)
        if s <= 0:
            rows.append(delta - eps)
            rhs.append(0.0)
    c = np.zeros(n)
    c[:j] = x
    return _min_over_vertices(c, np.array(rows), np.array(rhs))


def _oracle_query_objective(features, history, candidate, gamma):
    worst = None
    for s in (-1, 0, 1):
        values = [
            _oracle_wc(features, list(history) + [(candidate, s)], gamma, features[i])
            for i in range(features.shape[0])
        ]
        if values[0] is None:
            continue
        best = max(values)
        if worst is None or best < worst:
            worst = best
    return worst


def check_query_selection_against_brute_force(
    instances: int = 10, seed: int = 31415
) -> CheckResult:
    rng = np.random.default_rng(seed)
    noise = NoiseParams(0.1, 0.9)
    worst = 0.0
    checked = 0
    for _ in range(instances):
        count = int(rng.integers(3, 6))
        dim = int(rng.integers(2, 4))
        features = rng.uniform(0.0, 1.0, size=(count, dim))
        x = AlternativeSet(features)
        history = []
        for _ in range(int(rng.integers(0, 3))):
            i = int(rng.integers(1, count))
            jj = int(rng.integers(i + 1, count + 1))
            history.append((Query(i, jj), int(rng.choice([-1, 0, 1]))))
        gamma = gamma_schedule(noise, len(history) + 1)
        oracle_values = [
            _oracle_query_objective(features, history, cand, gamma)
            for cand in all_queries(count)
        ]
        feasible = [v for v in oracle_values if v is not None]
        if not feasible:
            continue
        best_oracle = max(feasible)
        chosen = select_query_robust(x, history, noise)
        chosen_value = _oracle_query_objective(features, history, chosen, gamma)
        worst = max(worst, abs(chosen_value - best_oracle))
        checked += 1
        if worst > 1e-7:
            return CheckResult(
                "query-selection-vs-brute-force", False, f"objective off by {worst:.2e}"
            )
    return CheckResult(
        "query-selection-vs-brute-force",
        True,
        f"{checked} instances, max |diff| {worst:.2e}",
    )


def _series_erf(x: float) -> float:
    total, term, n = 0.0, x, 0
    while abs(term) > 1e-18 and n < 200:
        total += term / (2 * n + 1)
        n += 1
        term *= -x * x / n
    return 2.0 / math.sqrt(math.pi) * total


def check_noise_budget_against_series(seed: int = 0) -> CheckResult:
    worst = 0.0
    for sigma, p, k in ((0.1, 0.9, 1), (0.1, 0.9, 10), (0.2, 0.8, 4), (0.05, 0.99, 7)):
        target = 2.0 * p - 1.0
        lo, hi = 0.0, 3.0
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            if _series_erf(mid) < target:
                lo = mid
            else:
                hi = mid
        expected = 2.0 * sigma * math.sqrt(k) * 0.5 * (lo + hi)
        worst = max(worst, abs(gamma_schedule(NoiseParams(sigma, p), k) - expected))
    passed = worst < 1e-9
    return CheckResult("noise-budget-vs-series-erf", passed, f"max |diff| {worst:.2e}")


def check_simplex_minimum_is_min_component(seed: int = 99) -> CheckResult:
    rng = np.random.default_rng(seed)
    program = initial_uncertainty(5)
    worst = 0.0
    for _ in range(25):
        x = rng.uniform(0.0, 1.0, size=5)
        value = worst_case_utilities([x], program)[0]
        worst = max(worst, abs(value - float(x.min())))
    passed = worst < 1e-9
    return CheckResult("initial-simplex-min-component", passed, f"max |diff| {worst:.2e}")


def run_selftest(lp_instances: int = 40, query_instances: int = 10) -> list[CheckResult]:
    return [
        check_lp_against_vertex_enumeration(lp_instances),
        check_query_selection_against_brute_force(query_instances),
        check_noise_budget_against_series(),
        check_simplex_minimum_is_min_component(),
    ]
