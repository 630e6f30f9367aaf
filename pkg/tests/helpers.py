"""Shared builders for session-record and service fixtures."""

from __future__ import annotations

import numpy as np

from prefelicit import AlternativeSet
from prefelicit.analysis import FinalComparison, SessionRecord, StepRecord


def toy_alternatives(count: int = 4, dimension: int = 3, seed: int = 77) -> AlternativeSet:
    """Small alternative set with synthetic raw outcomes for card rendering."""
    rng = np.random.default_rng(seed)
    features = rng.uniform(0.0, 1.0, size=(count, dimension))
    raw_outcomes = []
    for i in range(count):
        survival = [round(float(v), 3) for v in rng.uniform(0.2, 0.95, size=6)]
        access = [round(float(v), 3) for v in rng.uniform(0.3, 1.0, size=6)]
        raw_outcomes.append(
            {
                "life_years_saved": round(float(rng.uniform(10_000, 90_000)), 1),
                "overall_survival": round(float(np.mean(survival)), 3),
                "survival_by_age": survival,
                "access_by_age": access,
                "cv_survival": 0.2,
                "cv_access": 0.1,
            }
        )
    return AlternativeSet(features, raw_outcomes=raw_outcomes)


def dominant_alternatives() -> AlternativeSet:
    """One policy dominates: every arm recommends it whatever the answers."""
    features = [[0.1, 0.1], [0.9, 0.9], [0.2, 0.15]]
    raw = []
    for i in range(3):
        raw.append(
            {
                "life_years_saved": 1000.0 * (i + 1),
                "overall_survival": 0.5,
                "survival_by_age": [0.5] * 6,
                "access_by_age": [0.5] * 6,
                "cv_survival": 0.0,
                "cv_access": 0.0,
            }
        )
    return AlternativeSet(features, raw_outcomes=raw)

GOOD_CRT = ["5 cents", "5 minutes", "47 days"]


def make_session(
    session_id: str,
    worker_id: str | None = None,
    created_at: float = 1_600_000_000.0,
    first_query_s: float = 20.0,
    other_query_s: float = 6.0,
    duration_s: float = 1_200.0,
    crt_answers: list[str] | None = None,
    k_queries: int = 2,
    final_same_policy: bool = False,
    final_response: int = 1,
    group: str = "robust-first",
    status: str = "completed",
) -> SessionRecord:
    """A well-formed completed session; override pieces to trip rules."""
    crt_answers = GOOD_CRT if crt_answers is None else crt_answers
    steps: list[StepRecord] = []
    step = 0
    for arm in ("robust", "random"):
        for _ in range(k_queries):
            steps.append(
                StepRecord(
                    step=step,
                    kind="pairwise",
                    arm=arm,
                    query=(1, 2),
                    swapped=False,
                    response=1,
                    text=None,
                    elapsed_ms=(first_query_s if step == 0 else other_query_s) * 1000.0,
                )
            )
            step += 1
        if arm == "robust":
            for answer in crt_answers:
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
    robust_index = 3
    random_index = 3 if final_same_policy else 5
    steps.append(
        StepRecord(
            step=step,
            kind="final",
            arm=None,
            query=(robust_index, random_index),
            swapped=False,
            response=final_response,
            text=None,
            elapsed_ms=other_query_s * 1000.0,
        )
    )
    return SessionRecord(
        session_id=session_id,
        worker_id=worker_id,
        group=group,
        status=status,
        demographics={
            "age_group": "30-39",
            "race_ethnicity": "declined",
            "gender": "declined",
            "works_in_healthcare": "no",
        },
        created_at=created_at,
        completed_at=created_at + duration_s,
        steps=steps,
        final=FinalComparison(
            robust_index=robust_index,
            random_index=random_index,
            z_robust=0.6,
            z_random=0.5,
            swapped=False,
            response=final_response,
        ),
    )


def cleaning_fixture() -> list[SessionRecord]:
    """Ten sessions, one per cleaning outcome, with bit-exact boundaries."""
    return [
        make_session("s01", worker_id="w1", created_at=1_000.0),
        make_session("s02", worker_id="w1", created_at=2_000.0),  # duplicate
        make_session("s03", crt_answers=["", "5 minutes", "47 days"]),  # bot
        make_session("s04", first_query_s=10.0),  # first query too fast
        make_session("s05", first_query_s=14.999),  # just under the boundary
        make_session("s06", first_query_s=15.0, other_query_s=3.0, duration_s=3600.0),
        make_session("s07", other_query_s=2.5),  # average too fast
        make_session("s08", duration_s=65.0 * 60.0),  # duration outlier
        make_session("s09", final_same_policy=True, final_response=1),
        make_session("s10", final_same_policy=True, final_response=0),
    ]
