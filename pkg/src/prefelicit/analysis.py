"""Synthetic-agent experiments, response cleaning, and test statistics.

The synthetic harness mirrors the live questionnaire: an agent with a
hidden utility vector answers adaptive and random queries, each arm gets
its own robust recommendation, and the two are compared both by
worst-case guarantee and by the agent's true utility. The cleaning
rules and the statistics reproduce the attention-check pipeline and the
significance tests used on the collected sessions.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

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
)
from .errors import DataValidationError, InfeasibleHistoryError
from .special import chi2_sf_1df, normal_quantile, student_t_two_sided_p

PREFERS_ROBUST = "prefers_robust"
PREFERS_RANDOM = "prefers_random"
INDIFFERENT_DIFFERENT = "indifferent_different"
INDIFFERENT_SAME = "indifferent_same"
COUNT_KEYS = (PREFERS_ROBUST, PREFERS_RANDOM, INDIFFERENT_DIFFERENT, INDIFFERENT_SAME)


# ---------------------------------------------------------------------------
# session records (shared schema with the survey service export)
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    kind: str  # pairwise | crt | final
    arm: str | None  # robust | random | None
    query: tuple[int, int] | None
    swapped: bool | None
    response: int | None
    text: str | None
    elapsed_ms: float

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "kind": self.kind,
            "arm": self.arm,
            "query": list(self.query) if self.query is not None else None,
            "swapped": self.swapped,
            "response": self.response,
            "text": self.text,
            "elapsed_ms": self.elapsed_ms,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "StepRecord":
        query = doc.get("query")
        return cls(
            step=int(doc["step"]),
            kind=str(doc["kind"]),
            arm=doc.get("arm"),
            query=(int(query[0]), int(query[1])) if query is not None else None,
            swapped=doc.get("swapped"),
            response=doc.get("response"),
            text=doc.get("text"),
            elapsed_ms=float(doc["elapsed_ms"]),
        )


@dataclass
class FinalComparison:
    """The head-to-head between the two arms' recommendations.

    ``response`` is canonical: 1 prefers the adaptive arm's policy,
    -1 the random arm's, 0 indifferent.
    """

    robust_index: int
    random_index: int
    z_robust: float | None
    z_random: float | None
    swapped: bool
    response: int | None

    def to_json_dict(self) -> dict:
        return {
            "robust_index": self.robust_index,
            "random_index": self.random_index,
            "z_robust": self.z_robust,
            "z_random": self.z_random,
            "swapped": self.swapped,
            "response": self.response,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FinalComparison":
        return cls(
            robust_index=int(doc["robust_index"]),
            random_index=int(doc["random_index"]),
            z_robust=doc.get("z_robust"),
            z_random=doc.get("z_random"),
            swapped=bool(doc.get("swapped", False)),
            response=doc.get("response"),
        )


@dataclass
class SessionRecord:
    session_id: str
    group: str  # robust-first | random-first
    status: str  # active | completed | expired
    demographics: dict
    created_at: float
    completed_at: float | None
    steps: list[StepRecord] = field(default_factory=list)
    final: FinalComparison | None = None
    worker_id: str | None = None

    @property
    def crt_answers(self) -> list[str]:
        return [s.text or "" for s in self.steps if s.kind == "crt"]

    @property
    def pairwise_steps(self) -> list[StepRecord]:
        return [s for s in self.steps if s.kind in ("pairwise", "final")]

    @property
    def duration_s(self) -> float | None:
        if self.completed_at is None:
            return None
        return self.completed_at - self.created_at

    def to_json_dict(self) -> dict:
        return {
            "v": 1,
            "id": self.session_id,
            "worker_id": self.worker_id,
            "group": self.group,
            "status": self.status,
            "demographics": self.demographics,
            "created_at": self.created_at,
            "completed_at": self.completed_at,
            "steps": [s.to_json_dict() for s in self.steps],
            "final": self.final.to_json_dict() if self.final else None,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SessionRecord":
        final = doc.get("final")
        return cls(
            session_id=str(doc["id"]),
            worker_id=doc.get("worker_id"),
            group=str(doc["group"]),
            status=str(doc["status"]),
            demographics=dict(doc.get("demographics") or {}),
            created_at=float(doc["created_at"]),
            completed_at=doc.get("completed_at"),
            steps=[StepRecord.from_json_dict(s) for s in doc.get("steps", [])],
            final=FinalComparison.from_json_dict(final) if final else None,
        )


def load_sessions_jsonl(path) -> list[SessionRecord]:
    sessions = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                sessions.append(SessionRecord.from_json_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise DataValidationError(f"{path}:{lineno}: bad session line: {exc}")
    return sessions


def dump_sessions_jsonl(sessions: Sequence[SessionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for session in sessions:
            fh.write(json.dumps(session.to_json_dict()) + "\n")


# ---------------------------------------------------------------------------
# synthetic agents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticAgent:
    """An agent with a hidden linear utility on the simplex.

    Responses carry a normal utility shock with deviation
    ``response_sigma``; differences within ``indifference_delta`` read
    as indifference.
    """

    utility: tuple[float, ...]
    response_sigma: float = 0.0
    indifference_delta: float = 0.0

    def __post_init__(self) -> None:
        u = np.asarray(self.utility)
        if u.ndim != 1 or u.size < 1:
            raise DataValidationError("utility must be a nonempty vector")
        if u.min() < -1e-9 or abs(float(u.sum()) - 1.0) > 1e-9:
            raise DataValidationError("utility must lie on the unit simplex")
        if self.response_sigma < 0.0 or self.indifference_delta < 0.0:
            raise DataValidationError("noise and indifference band must be >= 0")


def random_agent(
    dimension: int,
    rng: np.random.Generator,
    response_sigma: float = 0.0,
    indifference_delta: float = 0.0,
) -> SyntheticAgent:
    """Utility drawn uniformly from the simplex (normalized exponentials)."""
    raw = rng.exponential(1.0, size=dimension)
    u = raw / raw.sum()
    return SyntheticAgent(
        utility=tuple(float(v) for v in u),
        response_sigma=response_sigma,
        indifference_delta=indifference_delta,
    )


def agent_respond(
    agent: SyntheticAgent,
    alternatives: AlternativeSet,
    query: Query,
    rng: np.random.Generator,
) -> int:
    """Noisy three-way response: 1 prefers first, -1 second, 0 indifferent."""
    u = np.asarray(agent.utility)
    value = float(
        u @ (alternatives.vector(query.first) - alternatives.vector(query.second))
    )
    if agent.response_sigma > 0.0:
        value += float(rng.normal(0.0, agent.response_sigma))
    if abs(value) <= agent.indifference_delta:
        return 0
    return 1 if value > 0.0 else -1


def run_session(
    agent: SyntheticAgent,
    alternatives: AlternativeSet,
    k_queries: int,
    noise: NoiseParams,
    strategy: str,
    rng: np.random.Generator,
    table: LookupTable | None = None,
) -> tuple[list[tuple[Query, int]], Recommendation]:
    """Ask ``k_queries`` per the strategy and recommend at the final budget.

    When the recorded answers are inconsistent beyond the budget the
    final uncertainty set is empty; the recommendation then falls back
    to the no-information one (initial simplex).
    """
    if k_queries < 1:
        raise DataValidationError("need at least one query")
    if strategy not in ("robust", "random"):
        raise DataValidationError(f"unknown strategy {strategy!r}")

    history: list[tuple[Query, int]] = []
    if strategy == "robust":
        if table is None:
            table = build_lookup_table(alternatives, k_queries, noise, lazy=True)
        path: list[int] = []
        off_table = False
        for _ in range(k_queries):
            # an answer pattern outside the noise budget empties the set;
            # from there on serve the deterministic first-unasked fallback
            if not off_table:
                try:
                    query = table.query_for(tuple(path))
                except InfeasibleHistoryError:
                    off_table = True
            if off_table:
                query = fallback_query(
                    len(alternatives), {q.as_pair() for q, _ in history}
                )
            response = agent_respond(agent, alternatives, query, rng)
            history.append((query, response))
            path.append(response)
    else:
        seed = int(rng.integers(0, 2**63))
        for query in select_queries_random(seed, k_queries, len(alternatives)):
            history.append((query, agent_respond(agent, alternatives, query, rng)))

    recommendation = recommend(
        alternatives, history, gamma_schedule(noise, k_queries)
    )
    if not recommendation.feasible:
        recommendation = recommend(alternatives, [], 0.0)
    return history, recommendation


@dataclass
class AgentComparison:
    seed: int
    robust_index: int
    random_index: int
    z_robust: float
    z_random: float
    true_util_robust: float
    true_util_random: float
    preference: int  # 1 robust, -1 random, 0 indifferent
    z_combined_best: float | None
    z_no_query: float


def normalized_wc_difference(record: AgentComparison, tol: float = 1e-9) -> float:
    """(z_robust - z_random) scaled by the session's achievable range.

    The range runs from the no-query recommendation value to the best
    worst-case value available under the combined history. Degenerate
    or unavailable spans give 0. Clamped to [-1, 1].
    """
    if record.z_combined_best is None:
        return 0.0
    span = record.z_combined_best - record.z_no_query
    if span <= tol:
        return 0.0
    value = (record.z_robust - record.z_random) / span
    return max(-1.0, min(1.0, value))


@dataclass
class ComparisonSummary:
    records: list[AgentComparison]
    counts: dict[str, int]
    mean_z_robust: float
    mean_z_random: float
    normalized_differences: list[float]

    @property
    def n(self) -> int:
        return len(self.records)


def run_comparison_experiment(
    n_agents: int,
    alternatives: AlternativeSet,
    k_queries: int,
    noise: NoiseParams,
    seed: int,
    response_sigma: float = 0.05,
    indifference_delta: float = 0.02,
    table: LookupTable | None = None,
) -> ComparisonSummary:
    """Run both strategies on ``n_agents`` fresh agents and compare.

    The adaptive-query tree is shared across agents (it depends only on
    the alternative set and the noise parameters), so repeated response
    paths cost nothing.
    """
    if n_agents < 1:
        raise DataValidationError("need at least one agent")
    if table is None:
        table = build_lookup_table(alternatives, k_queries, noise, lazy=True)

    z_no_query = recommend(alternatives, [], 0.0).value
    assert z_no_query is not None
    gamma_combined = gamma_schedule(noise, 2 * k_queries)

    records: list[AgentComparison] = []
    counts = {key: 0 for key in COUNT_KEYS}
    spawned = np.random.SeedSequence(seed).spawn(n_agents)
    for i, agent_ss in enumerate(spawned):
        rng_utility, rng_robust, rng_random = [
            np.random.default_rng(s) for s in agent_ss.spawn(3)
        ]
        agent = random_agent(
            alternatives.dimension,
            rng_utility,
            response_sigma=response_sigma,
            indifference_delta=indifference_delta,
        )
        robust_history, robust_rec = run_session(
            agent, alternatives, k_queries, noise, "robust", rng_robust, table=table
        )
        random_history, random_rec = run_session(
            agent, alternatives, k_queries, noise, "random", rng_random
        )
        assert robust_rec.index is not None and random_rec.index is not None
        assert robust_rec.value is not None and random_rec.value is not None

        u = np.asarray(agent.utility)
        true_robust = float(u @ alternatives.vector(robust_rec.index))
        true_random = float(u @ alternatives.vector(random_rec.index))
        diff = true_robust - true_random
        if abs(diff) <= agent.indifference_delta:
            preference = 0
            key = (
                INDIFFERENT_SAME
                if robust_rec.index == random_rec.index
                else INDIFFERENT_DIFFERENT
            )
        else:
            preference = 1 if diff > 0 else -1
            key = PREFERS_ROBUST if diff > 0 else PREFERS_RANDOM
        counts[key] += 1

        combined = recommend(
            alternatives, list(robust_history) + list(random_history), gamma_combined
        )
        records.append(
            AgentComparison(
                seed=i,
                robust_index=robust_rec.index,
                random_index=random_rec.index,
                z_robust=robust_rec.value,
                z_random=random_rec.value,
                true_util_robust=true_robust,
                true_util_random=true_random,
                preference=preference,
                z_combined_best=combined.value if combined.feasible else None,
                z_no_query=z_no_query,
            )
        )

    return ComparisonSummary(
        records=records,
        counts=counts,
        mean_z_robust=float(np.mean([r.z_robust for r in records])),
        mean_z_random=float(np.mean([r.z_random for r in records])),
        normalized_differences=[normalized_wc_difference(r) for r in records],
    )


def write_experiment_report(summary: ComparisonSummary, json_path, csv_path) -> None:
    doc = {
        "v": 1,
        "n": summary.n,
        "counts": summary.counts,
        "mean_z_robust": summary.mean_z_robust,
        "mean_z_random": summary.mean_z_random,
        "mean_normalized_difference": (
            float(np.mean(summary.normalized_differences))
            if summary.normalized_differences
            else 0.0
        ),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "seed",
                "z_robust",
                "z_rand",
                "true_util_robust",
                "true_util_rand",
                "final_preference",
            ]
        )
        for r in summary.records:
            writer.writerow(
                [
                    r.seed,
                    r.z_robust,
                    r.z_random,
                    r.true_util_robust,
                    r.true_util_random,
                    r.preference,
                ]
            )


# ---------------------------------------------------------------------------
# cleaning
# ---------------------------------------------------------------------------

DUPLICATE_ATTEMPT = "duplicate-attempt"
BOT_CRT = "bot-crt"
FIRST_QUERY_FAST = "first-query-fast"
AVERAGE_FAST = "average-fast"
DURATION_OUTLIER = "duration-outlier"
SAME_POLICY_NOT_INDIFFERENT = "same-policy-not-indifferent"


@dataclass(frozen=True)
class CleaningThresholds:
    first_query_s: float = 15.0
    average_s: float = 3.0
    max_duration_s: float = 3600.0


DEFAULT_THRESHOLDS = CleaningThresholds()
STRICT_THRESHOLDS = CleaningThresholds(first_query_s=30.0, average_s=5.0)


@dataclass
class CleanReport:
    kept: list[str]
    removed: list[tuple[str, str]]  # (session id, rule)
    errors: list[tuple[str, str]]  # (session id, message)

    def removed_by_rule(self, rule: str) -> list[str]:
        return [sid for sid, r in self.removed if r == rule]


def _looks_bot_like(answers: Sequence[str]) -> bool:
    if not answers:
        return True
    for answer in answers:
        text = answer.strip()
        if not text:
            return True
        if not any(ch.isalnum() for ch in text):
            return True
        if len(text) >= 4 and len(set(text.lower())) == 1:
            return True
    return False


def clean_responses(
    sessions: Sequence[SessionRecord],
    thresholds: CleaningThresholds | None = None,
    bot_detector: Callable[[Sequence[str]], bool] | None = None,
) -> CleanReport:
    """Apply the attention-check rules in order; first match removes.

    Order: duplicate attempts (keep the earliest per worker), bot-like
    free-text answers, first query answered in under the first-query
    threshold, remaining queries averaging under the average threshold,
    total duration over the outlier cap, and a non-indifferent answer on
    a final query that showed the same policy twice. Boundary values
    stay: exactly 15.0 s on the first query is kept.
    """
    thresholds = thresholds or DEFAULT_THRESHOLDS
    bot_detector = bot_detector or _looks_bot_like

    first_attempt: dict[str, str] = {}
    for session in sorted(sessions, key=lambda s: (s.created_at, s.session_id)):
        if session.worker_id is not None:
            first_attempt.setdefault(session.worker_id, session.session_id)

    report = CleanReport(kept=[], removed=[], errors=[])
    for session in sessions:
        try:
            rule = _first_matching_rule(session, thresholds, bot_detector, first_attempt)
        except (KeyError, IndexError, TypeError, AttributeError) as exc:
            report.errors.append((session.session_id, f"malformed record: {exc!r}"))
            continue
        if rule is None:
            report.kept.append(session.session_id)
        else:
            report.removed.append((session.session_id, rule))
    return report


def _first_matching_rule(
    session: SessionRecord,
    thresholds: CleaningThresholds,
    bot_detector: Callable[[Sequence[str]], bool],
    first_attempt: dict[str, str],
) -> str | None:
    if (
        session.worker_id is not None
        and first_attempt.get(session.worker_id) != session.session_id
    ):
        return DUPLICATE_ATTEMPT
    pairwise = session.pairwise_steps
    if not pairwise:
        raise KeyError("no pairwise steps")
    if bot_detector(session.crt_answers):
        return BOT_CRT
    if pairwise[0].elapsed_ms / 1000.0 < thresholds.first_query_s:
        return FIRST_QUERY_FAST
    rest = pairwise[1:]
    if rest:
        average = sum(s.elapsed_ms for s in rest) / len(rest) / 1000.0
        if average < thresholds.average_s:
            return AVERAGE_FAST
    duration = session.duration_s
    if duration is not None and duration > thresholds.max_duration_s:
        return DURATION_OUTLIER
    if (
        session.final is not None
        and session.final.robust_index == session.final.random_index
        and session.final.response != 0
    ):
        return SAME_POLICY_NOT_INDIFFERENT
    return None


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def two_sample_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, int, float]:
    """Pooled-variance two-sample t test (two-sided)."""
    n_a, n_b = len(a), len(b)
    if n_a < 2 or n_b < 2:
        raise DataValidationError("both samples need at least two observations")
    arr_a = np.asarray(a, dtype=float)
    arr_b = np.asarray(b, dtype=float)
    df = n_a + n_b - 2
    pooled = ((n_a - 1) * arr_a.var(ddof=1) + (n_b - 1) * arr_b.var(ddof=1)) / df
    if pooled <= 0.0:
        raise DataValidationError("pooled variance is zero")
    t = float((arr_a.mean() - arr_b.mean()) / math.sqrt(pooled * (1 / n_a + 1 / n_b)))
    return t, df, student_t_two_sided_p(t, df)


def chi_square_uniform_two(
    counts: tuple[int, int], continuity: bool = True
) -> tuple[float, int, float]:
    """Goodness of fit of two cells against a 50/50 split.

    With ``continuity`` the Yates correction shrinks each deviation by
    0.5 (clamped at zero). p is the chi-square(1) upper tail of the
    returned statistic.
    """
    n1, n2 = counts
    if n1 < 0 or n2 < 0 or n1 + n2 < 1:
        raise DataValidationError("need nonnegative counts with a positive total")
    expected = (n1 + n2) / 2.0
    c = 0.5 if continuity else 0.0
    statistic = sum(
        max(0.0, abs(observed - expected) - c) ** 2 / expected
        for observed in (n1, n2)
    )
    return statistic, 1, chi2_sf_1df(statistic)


@dataclass
class FinalQuerySummary:
    counts: dict[str, int]
    intervals: dict[str, tuple[float, float]]
    n: int


# ---------------------------------------------------------------------------
# bundled reference dataset
# ---------------------------------------------------------------------------


def reference_partition_sessions() -> list[SessionRecord]:
    """A deterministic 193-session dataset with a known outcome split.

    The final-query partition is 94 / 61 / 22 / 16 (robust, random,
    indifferent on different policies, indifferent on the same policy),
    94 sessions ran the adaptive arm first, and the per-arm worst-case
    values average 0.60 vs 0.52 with a pooled spread chosen so the
    two-sample t statistic lands at 4.58. Timings are clean: nothing in
    it trips the default attention-check thresholds.
    """
    n = 193
    k_queries = 10
    spread = 0.08 / (4.58 * math.sqrt(2.0 / n))
    crt = ["5 cents", "5 minutes", "47 days"]

    def z_values(mean: float) -> list[float]:
        values = []
        for i in range(n - 1):
            values.append(mean + spread if i % 2 == 0 else mean - spread)
        values.append(mean)
        return values

    z_robust = z_values(0.60)
    z_random = z_values(0.52)

    sessions: list[SessionRecord] = []
    for i in range(n):
        if i < 94:
            response, same = 1, False
        elif i < 94 + 61:
            response, same = -1, False
        elif i < 94 + 61 + 22:
            response, same = 0, False
        else:
            response, same = 0, True
        robust_index = (i % 24) + 1
        random_index = robust_index if same else (robust_index % 25) + 1
        group = "robust-first" if i < 94 else "random-first"
        created = 1_600_000_000.0 + 10.0 * i

        steps: list[StepRecord] = []
        step = 0
        arms = ("robust", "random") if group == "robust-first" else ("random", "robust")
        for half, arm in enumerate(arms):
            for q in range(k_queries):
                steps.append(
                    StepRecord(
                        step=step,
                        kind="pairwise",
                        arm=arm,
                        query=(1, 2),
                        swapped=False,
                        response=1,
                        text=None,
                        elapsed_ms=20_000.0 if step == 0 else 6_000.0,
                    )
                )
                step += 1
            if half == 0:
                for answer in crt:
                    steps.append(
                        StepRecord(
                            step=step,
                            kind="crt",
                            arm=None,
                            query=None,
                            swapped=None,
                            response=None,
                            text=answer,
                            elapsed_ms=9_000.0,
                        )
                    )
                    step += 1
        steps.append(
            StepRecord(
                step=step,
                kind="final",
                arm=None,
                query=(robust_index, random_index),
                swapped=False,
                response=response,
                text=None,
                elapsed_ms=7_000.0,
            )
        )
        sessions.append(
            SessionRecord(
                session_id=f"ref-{i:03d}",
                worker_id=f"worker-{i:03d}",
                group=group,
                status="completed",
                demographics={
                    "age_group": "30-39",
                    "race_ethnicity": "declined",
                    "gender": "declined",
                    "works_in_healthcare": "no",
                },
                created_at=created,
                completed_at=created + 1_200.0,
                steps=steps,
                final=FinalComparison(
                    robust_index=robust_index,
                    random_index=random_index,
                    z_robust=z_robust[i],
                    z_random=z_random[i],
                    swapped=False,
                    response=response,
                ),
            )
        )
    return sessions


def summarize_final_query(sessions: Sequence[SessionRecord]) -> FinalQuerySummary:
    """Four-way counts of the head-to-head outcome, with 95% normal CIs."""
    counts = {key: 0 for key in COUNT_KEYS}
    for session in sessions:
        final = session.final
        if final is None or final.response is None:
            continue
        if final.response == 1:
            counts[PREFERS_ROBUST] += 1
        elif final.response == -1:
            counts[PREFERS_RANDOM] += 1
        elif final.robust_index == final.random_index:
            counts[INDIFFERENT_SAME] += 1
        else:
            counts[INDIFFERENT_DIFFERENT] += 1
    n = sum(counts.values())
    z = normal_quantile(0.975)
    intervals = {}
    for key, count in counts.items():
        if n == 0:
            intervals[key] = (0.0, 0.0)
            continue
        p_hat = count / n
        half = z * math.sqrt(n * p_hat * (1.0 - p_hat))
        intervals[key] = (count - half, count + half)
    return FinalQuerySummary(counts=counts, intervals=intervals, n=n)
