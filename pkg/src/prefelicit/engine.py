"""Robust query selection and recommendation over a finite alternative set.

The recommendation maximizes worst-case utility over the current
uncertainty set. The next query is chosen by exact enumeration: every
candidate pair, every response, every alternative, one LP per leaf. The
response-indexed results are cached in a lookup table so a live survey
can serve the next adaptive query instantly.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataValidationError, InfeasibleHistoryError
from .special import erf_inverse
from .uncertainty import (
    FeasibilityProgram,
    apply_history,
    initial_uncertainty,
    worst_case_utilities,
)

RESPONSES = (1, 0, -1)  # prefers first, indifferent, prefers second
TIE_TOL = 1e-7

History = Sequence[tuple["Query", int]]


@dataclass(frozen=True)
class Query:
    """A pairwise comparison between alternatives ``first`` < ``second``.

    Indices are 1-based throughout the public API.
    """

    first: int
    second: int

    def __post_init__(self) -> None:
        if not (1 <= self.first < self.second):
            raise DataValidationError(
                f"query indices must satisfy 1 <= first < second, got "
                f"({self.first}, {self.second})"
            )

    def as_pair(self) -> tuple[int, int]:
        return (self.first, self.second)


class AlternativeSet:
    """The finite set of alternatives, as normalized feature vectors."""

    def __init__(
        self,
        features: Sequence[Sequence[float]] | np.ndarray,
        labels: Sequence[str] | None = None,
        display_mask: Sequence[bool] | None = None,
        raw_outcomes: list[dict] | None = None,
    ) -> None:
        matrix = np.asarray(features, dtype=float)
        if matrix.ndim != 2:
            raise DataValidationError("features must be a 2-D matrix")
        count, dim = matrix.shape
        if count < 2:
            raise DataValidationError("need at least two alternatives")
        if dim < 1:
            raise DataValidationError("alternatives need at least one feature")
        if matrix.min() < -1e-9 or matrix.max() > 1.0 + 1e-9:
            raise DataValidationError("feature values must lie in [0, 1]")
        if labels is None:
            labels = [f"Policy {i}" for i in range(1, count + 1)]
        if len(labels) != count:
            raise DataValidationError("one label per alternative required")
        if display_mask is None:
            display_mask = [True] * dim
        if len(display_mask) != dim:
            raise DataValidationError("display mask length must equal dimension")
        matrix.setflags(write=False)
        self._matrix = matrix
        self.labels = tuple(str(s) for s in labels)
        self.display_mask = tuple(bool(b) for b in display_mask)
        self.raw_outcomes = raw_outcomes

    def __len__(self) -> int:
        return self._matrix.shape[0]

    @property
    def dimension(self) -> int:
        return self._matrix.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def vector(self, index: int) -> np.ndarray:
        """Feature vector of the 1-based alternative ``index``."""
        if not 1 <= index <= len(self):
            raise DataValidationError(f"alternative index {index} out of range")
        return self._matrix[index - 1]

    def vectors(self) -> list[np.ndarray]:
        return [self._matrix[i] for i in range(len(self))]

    def content_hash(self) -> str:
        payload = json.dumps(self._matrix.tolist())
        return hashlib.sha256(payload.encode("ascii")).hexdigest()

    def to_json_dict(self) -> dict:
        return {
            "v": 1,
            "labels": list(self.labels),
            "features": self._matrix.tolist(),
            "display_mask": list(self.display_mask),
            "raw_outcomes": self.raw_outcomes,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AlternativeSet":
        try:
            return cls(
                features=doc["features"],
                labels=doc.get("labels"),
                display_mask=doc.get("display_mask"),
                raw_outcomes=doc.get("raw_outcomes"),
            )
        except KeyError as exc:
            raise DataValidationError(f"alternatives document missing {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AlternativeSet":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class NoiseParams:
    """Response-noise level and the confidence of the inconsistency budget."""

    sigma: float
    p: float

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise DataValidationError("sigma must be nonnegative")
        if not 0.5 < self.p < 1.0:
            raise DataValidationError("p must lie strictly between 0.5 and 1")


@dataclass(frozen=True)
class Recommendation:
    """Arg max of worst-case utility; index is 1-based, None if infeasible."""

    index: int | None
    value: float | None
    feasible: bool


def gamma_schedule(noise: NoiseParams, k: int) -> float:
    """Inconsistency budget after k answered queries: 2*sigma*sqrt(k)*erfinv(2p-1)."""
    if k < 1:
        raise DataValidationError("k must be at least 1")
    if noise.sigma == 0.0:
        return 0.0
    return 2.0 * noise.sigma * math.sqrt(k) * erf_inverse(2.0 * noise.p - 1.0)


def all_queries(count: int) -> list[Query]:
    """The full pairwise query universe over ``count`` alternatives."""
    return [Query(i, j) for i in range(1, count + 1) for j in range(i + 1, count + 1)]


def recommend(
    alternatives: AlternativeSet, history: History, gamma: float
) -> Recommendation:
    """Solve max over alternatives of min utility over the updated set.

    Ties go to the smallest index. When the history is inconsistent
    beyond the budget the set is empty: the flag comes back False and
    the caller decides policy.
    """
    program = apply_history(
        initial_uncertainty(alternatives.dimension), alternatives, history, gamma
    )
    values = worst_case_utilities(alternatives.vectors(), program)
    if values is None:
        return Recommendation(index=None, value=None, feasible=False)
    best_index = 0
    for i in range(1, len(values)):
        if values[i] > values[best_index]:
            best_index = i
    return Recommendation(index=best_index + 1, value=values[best_index], feasible=True)


def _candidate_objective(
    alternatives: AlternativeSet,
    history: list[tuple[Query, int]],
    candidate: Query,
    gamma: float,
) -> float | None:
    """min over responses of max over alternatives of worst-case utility.

    Responses that empty the updated set are skipped: an impossible
    answer cannot be the adversary's choice. None when every response is
    impossible (the history itself is inconsistent beyond the budget).
    """
    base = initial_uncertainty(alternatives.dimension)
    vectors = alternatives.vectors()
    objective: float | None = None
    for response in RESPONSES:
        program = apply_history(
            base, alternatives, history + [(candidate, response)], gamma
        )
        values = worst_case_utilities(vectors, program)
        if values is None:
            continue
        best = max(values)
        if objective is None or best < objective:
            objective = best
    return objective


def select_query_robust(
    alternatives: AlternativeSet,
    history: History,
    noise: NoiseParams,
    max_queries: int | None = None,
) -> Query:
    """Exact optimizer of the adaptive max-min-max-min query selection.

    Enumerates every candidate pair, every response, every alternative,
    with one LP per leaf. Budget is the schedule value at the step being
    selected. Objective ties (within 1e-7) prefer queries not already in
    the history, then the lexicographically smallest pair.
    """
    if len(alternatives) < 2:
        raise DataValidationError("need at least two alternatives to form a query")
    if max_queries is not None and len(history) >= max_queries:
        raise DataValidationError(
            f"history already holds {len(history)} of {max_queries} queries"
        )
    history = list(history)
    gamma = gamma_schedule(noise, len(history) + 1)
    asked = {q.as_pair() for q, _ in history}

    best_query: Query | None = None
    best_value: float | None = None
    best_asked = False
    for candidate in all_queries(len(alternatives)):
        value = _candidate_objective(alternatives, history, candidate, gamma)
        if value is None:
            continue
        candidate_asked = candidate.as_pair() in asked
        if best_value is None or value > best_value + TIE_TOL:
            best_query, best_value, best_asked = candidate, value, candidate_asked
        elif value >= best_value - TIE_TOL and best_asked and not candidate_asked:
            best_query, best_value, best_asked = candidate, value, candidate_asked
    if best_query is None:
        raise InfeasibleHistoryError(
            "every response to every candidate query leaves an empty uncertainty set"
        )
    return best_query


def select_queries_random(seed: int, count: int, n_alternatives: int) -> list[Query]:
    """``count`` distinct queries sampled uniformly without replacement."""
    universe = all_queries(n_alternatives)
    if count > len(universe):
        raise DataValidationError(
            f"cannot draw {count} distinct queries from a universe of {len(universe)}"
        )
    rng = random.Random(seed)
    return rng.sample(universe, count)


def fallback_query(n_alternatives: int, asked: set[tuple[int, int]]) -> Query:
    """First unasked pair in lexicographic order.

    Used when a respondent's answers left the model with an empty
    uncertainty set: the questionnaire still needs a next query, and this
    choice is a pure function of the asked set, so identical paths keep
    receiving identical queries.
    """
    for query in all_queries(n_alternatives):
        if query.as_pair() not in asked:
            return query
    raise DataValidationError("query universe exhausted")


def _sequence_key(path: Sequence[int]) -> str:
    return ",".join(str(s) for s in path)


def _parse_key(key: str) -> tuple[int, ...]:
    if key == "":
        return ()
    try:
        path = tuple(int(tok) for tok in key.split(","))
    except ValueError as exc:
        raise DataValidationError(f"bad sequence key {key!r}") from exc
    if any(s not in RESPONSES for s in path):
        raise DataValidationError(f"bad response in sequence key {key!r}")
    return path


@dataclass
class LookupTable:
    """Map from a response sequence to the next robust query.

    In lazy mode missing entries are computed on demand (single writer;
    wrap access in a lock if sharing across threads). ``depth`` is the
    number of levels materialized eagerly; entries always include the
    root for the empty sequence.
    """

    max_queries: int
    noise: NoiseParams
    alternatives_hash: str
    n_alternatives: int
    dimension: int
    entries: dict[tuple[int, ...], Query] = field(default_factory=dict)
    _alternatives: AlternativeSet | None = None

    def attach_alternatives(self, alternatives: AlternativeSet) -> None:
        if alternatives.content_hash() != self.alternatives_hash:
            raise DataValidationError(
                "alternative set does not match the one this table was built for"
            )
        self._alternatives = alternatives

    def history_for(self, path: Sequence[int]) -> list[tuple[Query, int]]:
        """The query/response pairs along a response path from the root."""
        return [
            (self.query_for(tuple(path[:i])), path[i]) for i in range(len(path))
        ]

    def query_for(self, path: Sequence[int]) -> Query:
        path = tuple(path)
        if len(path) >= self.max_queries:
            raise DataValidationError(
                f"path of length {len(path)} exhausts the {self.max_queries}-query budget"
            )
        hit = self.entries.get(path)
        if hit is not None:
            return hit
        if self._alternatives is None:
            raise DataValidationError(
                f"sequence {_sequence_key(path)!r} missing from table and no "
                "alternative set attached for lazy computation"
            )
        query = select_query_robust(
            self._alternatives,
            self.history_for(path),
            self.noise,
            max_queries=self.max_queries,
        )
        self.entries[path] = query
        return query

    def to_json_dict(self) -> dict:
        return {
            "v": 1,
            "params": {
                "I": self.n_alternatives,
                "J": self.dimension,
                "K": self.max_queries,
                "sigma": self.noise.sigma,
                "p": self.noise.p,
            },
            "alternatives_hash": self.alternatives_hash,
            "entries": {
                _sequence_key(path): list(query.as_pair())
                for path, query in sorted(self.entries.items(), key=_entry_order)
            },
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(
        cls, doc: dict, alternatives: AlternativeSet | None = None
    ) -> "LookupTable":
        try:
            params = doc["params"]
            table = cls(
                max_queries=int(params["K"]),
                noise=NoiseParams(sigma=float(params["sigma"]), p=float(params["p"])),
                alternatives_hash=str(doc["alternatives_hash"]),
                n_alternatives=int(params["I"]),
                dimension=int(params["J"]),
                entries={
                    _parse_key(key): Query(int(pair[0]), int(pair[1]))
                    for key, pair in doc["entries"].items()
                },
            )
        except KeyError as exc:
            raise DataValidationError(f"lookup table document missing {exc}") from exc
        if alternatives is not None:
            table.attach_alternatives(alternatives)
        return table

    @classmethod
    def load(cls, path, alternatives: AlternativeSet | None = None) -> "LookupTable":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_json_dict(json.load(fh), alternatives)


def _entry_order(item: tuple[tuple[int, ...], Query]) -> tuple[int, tuple[int, ...]]:
    path, _ = item
    return (len(path), path)


def reachable_sequences(depth: int) -> Iterable[tuple[int, ...]]:
    """All response sequences of length 0..depth-1, breadth-first."""
    level: list[tuple[int, ...]] = [()]
    for _ in range(depth):
        for path in level:
            yield path
        level = [path + (s,) for path in level for s in RESPONSES]


def build_lookup_table(
    alternatives: AlternativeSet,
    max_queries: int,
    noise: NoiseParams,
    depth: int | None = None,
    lazy: bool = False,
    progress: "callable | None" = None,
) -> LookupTable:
    """Precompute the adaptive-query tree down to ``depth`` levels.

    Eager mode materializes all sum(3^k, k=0..depth-1) sequences
    breadth-first; lazy mode computes entries on first access. Both
    modes produce identical entries for any queried sequence.
    """
    if depth is None:
        depth = max_queries
    if not 1 <= depth <= max_queries:
        raise DataValidationError("depth must be between 1 and the query budget")
    table = LookupTable(
        max_queries=max_queries,
        noise=noise,
        alternatives_hash=alternatives.content_hash(),
        n_alternatives=len(alternatives),
        dimension=alternatives.dimension,
    )
    table.attach_alternatives(alternatives)
    if not lazy:
        # Paths whose uncertainty set is already empty cannot be walked
        # by any respondent the model admits; prune their subtrees.
        upper_bound = (3**depth - 1) // 2
        frontier: list[tuple[int, ...]] = [()]
        done = 0
        for _ in range(depth):
            next_frontier: list[tuple[int, ...]] = []
            for path in frontier:
                try:
                    table.query_for(path)
                except InfeasibleHistoryError:
                    continue
                done += 1
                if progress is not None:
                    progress(done, upper_bound)
                next_frontier.extend(path + (s,) for s in RESPONSES)
            frontier = next_frontier
    return table
