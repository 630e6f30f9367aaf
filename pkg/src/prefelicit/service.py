"""HTTP survey service running the questionnaire state machine.

Each session walks 2K pairwise steps (one adaptive arm, one random arm,
order randomized per participant), three free-text interlude questions
between the halves, and a final head-to-head between the two arms'
recommendations. Adaptive queries come from the lookup table keyed by
the session's response path so far, falling back to a synchronous solve
when the table is partial. All writes go through an append-only JSONL
event log; export streams one schema-versioned JSON object per session.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import BaseModel

from .analysis import FinalComparison, SessionRecord, StepRecord
from .engine import (
    AlternativeSet,
    LookupTable,
    NoiseParams,
    Query,
    build_lookup_table,
    fallback_query,
    gamma_schedule,
    recommend,
    select_queries_random,
)
from .errors import DataValidationError, InfeasibleHistoryError

import random as _random


class CreateSessionBody(BaseModel):
    v: int = 1
    demographics: dict | None = None
    worker_id: str | None = None


class AnswerBody(BaseModel):
    v: int = 1
    step: int
    response: str | None = None
    text: str | None = None
    elapsed_ms: float = 0.0

CRT_QUESTIONS = (
    "A bat and a ball cost $1.10 in total. The bat costs $1.00 more than "
    "the ball. How much does the ball cost?",
    "If it takes 5 machines 5 minutes to make 5 widgets, how long would it "
    "take 100 machines to make 100 widgets?",
    "In a lake, there is a patch of lily pads. Every day, the patch doubles "
    "in size. If it takes 48 days for the patch to cover the entire lake, "
    "how long would it take for the patch to cover half of the lake?",
)

DEMOGRAPHIC_FIELDS = ("age_group", "race_ethnicity", "gender", "works_in_healthcare")

GROUP_ROBUST_FIRST = "robust-first"
GROUP_RANDOM_FIRST = "random-first"

RESPONSE_WORDS = {"left": None, "indifferent": 0, "right": None}


class ServiceError(Exception):
    def __init__(self, status_code: int, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


@dataclass
class ServiceConfig:
    alternatives_path: str
    lookup_table_path: str | None = None
    k_queries: int = 10
    sigma: float = 0.1
    p: float = 0.9
    expiry_minutes: float = 120.0
    bind: str = "127.0.0.1:8000"
    admin_token: str | None = None
    seed: int | None = None
    log_path: str = "sessions.log.jsonl"
    enforce_unique_workers: bool = False

    @classmethod
    def from_json(cls, path) -> "ServiceConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known - {"v"}
        if unknown:
            raise DataValidationError(f"unknown config keys: {sorted(unknown)}")
        if "alternatives_path" not in doc:
            raise DataValidationError("config needs alternatives_path")
        return cls(**{k: v for k, v in doc.items() if k in known})


class EventLog:
    """Append-only JSONL log with snapshot compaction.

    Every event is one JSON line, flushed before the call returns.
    ``compact`` folds the current state into a snapshot file and
    truncates the log; ``replay`` yields the snapshot state (if any)
    followed by the tail events.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.snapshot_path = self.path.with_suffix(self.path.suffix + ".snapshot")
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, event: dict) -> None:
        line = json.dumps(event)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def load_snapshot(self) -> dict | None:
        if not self.snapshot_path.exists():
            return None
        with open(self.snapshot_path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def replay_events(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events

    def compact(self, state: dict) -> None:
        with self._lock:
            tmp = self.snapshot_path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(state, fh)
                fh.write("\n")
            os.replace(tmp, self.snapshot_path)
            self._fh.close()
            self._fh = open(self.path, "w", encoding="utf-8")

    def close(self) -> None:
        self._fh.close()


@dataclass
class SessionState:
    session_id: str
    token: str
    worker_id: str | None
    group: str
    demographics: dict
    created_at: float
    side_orders: list[bool]  # one per pairwise step, in step order
    random_queries: list[list[int]]
    status: str = "active"
    step_index: int = 0
    robust_path: list[int] = field(default_factory=list)
    answers: list[dict] = field(default_factory=list)
    final: dict | None = None
    completed_at: float | None = None
    # set once the respondent's answers empty the uncertainty set; from
    # then on adaptive steps serve the deterministic fallback query
    off_table: bool = False

    def to_state_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "token": self.token,
            "worker_id": self.worker_id,
            "group": self.group,
            "demographics": self.demographics,
            "created_at": self.created_at,
            "side_orders": self.side_orders,
            "random_queries": self.random_queries,
            "status": self.status,
            "step_index": self.step_index,
            "robust_path": self.robust_path,
            "answers": self.answers,
            "final": self.final,
            "completed_at": self.completed_at,
            "off_table": self.off_table,
        }

    @classmethod
    def from_state_dict(cls, doc: dict) -> "SessionState":
        return cls(**doc)


class SurveyService:
    """Session store and state machine behind the HTTP API."""

    def __init__(
        self,
        config: ServiceConfig,
        alternatives: AlternativeSet | None = None,
        table: LookupTable | None = None,
        clock=time.time,
    ):
        self.config = config
        self.clock = clock
        self.noise = NoiseParams(sigma=config.sigma, p=config.p)
        self.k = config.k_queries
        self.total_steps = 2 * self.k + 4

        if alternatives is None:
            alternatives = AlternativeSet.load(config.alternatives_path)
        self.alternatives = alternatives
        if alternatives.raw_outcomes is None:
            raise DataValidationError(
                "alternatives file has no raw outcomes; policy cards need them"
            )
        if table is None:
            if config.lookup_table_path:
                table = LookupTable.load(config.lookup_table_path, alternatives)
            else:
                table = build_lookup_table(
                    alternatives, self.k, self.noise, lazy=True
                )
        else:
            table.attach_alternatives(alternatives)
        self.table = table

        self._rng = _random.Random(config.seed)
        self._counter = 0
        self._lock = threading.Lock()
        self.sessions: dict[str, SessionState] = {}
        self.log = EventLog(config.log_path)
        self._restore()

    # -- persistence ----------------------------------------------------

    def _restore(self) -> None:
        snapshot = self.log.load_snapshot()
        if snapshot:
            for doc in snapshot["sessions"]:
                state = SessionState.from_state_dict(doc)
                self.sessions[state.session_id] = state
            self._counter = snapshot.get("counter", len(self.sessions))
        for event in self.log.replay_events():
            self._apply_event(event)

    def _apply_event(self, event: dict) -> None:
        kind = event["type"]
        data = event["data"]
        if kind == "session_created":
            state = SessionState.from_state_dict(data)
            self.sessions[state.session_id] = state
            self._counter = max(self._counter, int(data["session_id"].split("-")[1]))
        elif kind == "answer":
            state = self.sessions[event["id"]]
            state.answers.append(data)
            state.step_index = data["step"] + 1
            if data.get("arm") == "robust" and data["kind"] == "pairwise":
                state.robust_path.append(data["response"])
                if data.get("off_table"):
                    state.off_table = True
        elif kind == "final_computed":
            self.sessions[event["id"]].final = data
        elif kind == "completed":
            state = self.sessions[event["id"]]
            state.status = "completed"
            state.completed_at = data["completed_at"]

    def compact(self) -> None:
        state = {
            "v": 1,
            "counter": self._counter,
            "sessions": [s.to_state_dict() for s in self.sessions.values()],
        }
        self.log.compact(state)

    # -- session lifecycle ----------------------------------------------

    def create_session(self, demographics: dict, worker_id: str | None = None) -> dict:
        if not isinstance(demographics, dict):
            raise ServiceError(400, "demographics block required")
        missing = [f for f in DEMOGRAPHIC_FIELDS if f not in demographics]
        if missing:
            raise ServiceError(400, f"missing demographic fields: {missing}")
        with self._lock:
            if self.config.enforce_unique_workers and worker_id is not None:
                if any(s.worker_id == worker_id for s in self.sessions.values()):
                    raise ServiceError(409, "worker already has a session")
            self._counter += 1
            session_id = f"s-{self._counter:06d}"
            token = secrets.token_hex(16)
            group = (
                GROUP_ROBUST_FIRST if self._rng.random() < 0.5 else GROUP_RANDOM_FIRST
            )
            side_orders = [self._rng.random() < 0.5 for _ in range(2 * self.k + 1)]
            random_queries = [
                list(q.as_pair())
                for q in select_queries_random(
                    self._rng.getrandbits(63), self.k, len(self.alternatives)
                )
            ]
            state = SessionState(
                session_id=session_id,
                token=token,
                worker_id=worker_id,
                group=group,
                demographics={f: str(demographics[f]) for f in DEMOGRAPHIC_FIELDS},
                created_at=self.clock(),
                side_orders=side_orders,
                random_queries=random_queries,
            )
            # persisted before the response goes out
            self.log.append(
                {
                    "v": 1,
                    "type": "session_created",
                    "ts": state.created_at,
                    "id": session_id,
                    "data": state.to_state_dict(),
                }
            )
            self.sessions[session_id] = state
        return {
            "v": 1,
            "id": session_id,
            "token": token,
            "total_steps": self.total_steps,
        }

    def _get(self, session_id: str, token: str | None) -> SessionState:
        state = self.sessions.get(session_id)
        if state is None:
            raise ServiceError(404, "no such session")
        if token != state.token:
            raise ServiceError(403, "bad session token")
        self._expire_if_due(state)
        return state

    def _expire_if_due(self, state: SessionState) -> None:
        if state.status != "active":
            return
        if self.clock() - state.created_at > self.config.expiry_minutes * 60.0:
            state.status = "expired"

    # -- step layout ------------------------------------------------------

    def _step_kind(self, state: SessionState, step: int):
        """(kind, arm, index-within-arm) for a step index."""
        k = self.k
        first_arm = "robust" if state.group == GROUP_ROBUST_FIRST else "random"
        second_arm = "random" if first_arm == "robust" else "robust"
        if step < k:
            return ("pairwise", first_arm, step)
        if step < k + 3:
            return ("crt", None, step - k)
        if step < 2 * k + 3:
            return ("pairwise", second_arm, step - k - 3)
        return ("final", None, 0)

    def _pairwise_index(self, state: SessionState, step: int) -> int:
        """Index into side_orders: pairwise steps in order, final last."""
        k = self.k
        if step < k:
            return step
        if step < 2 * k + 3:
            return step - 3
        return 2 * k

    def _asked_robust_pairs(self, state: SessionState) -> set[tuple[int, int]]:
        return {
            tuple(a["query"])
            for a in state.answers
            if a["kind"] == "pairwise" and a["arm"] == "robust"
        }

    def _query_for_step(self, state: SessionState, arm: str, arm_index: int) -> Query:
        if arm != "robust":
            pair = state.random_queries[arm_index]
            return Query(pair[0], pair[1])
        if not state.off_table:
            path = tuple(state.robust_path[:arm_index])
            try:
                return self.table.query_for(path)
            except InfeasibleHistoryError:
                state.off_table = True
        return fallback_query(len(self.alternatives), self._asked_robust_pairs(state))

    def _card(self, index: int) -> dict:
        outcomes = self.alternatives.raw_outcomes[index - 1]
        return {
            "label": self.alternatives.labels[index - 1],
            "policy": index,
            "life_years_saved": outcomes["life_years_saved"],
            "overall_survival": outcomes["overall_survival"],
            "survival_by_age": outcomes["survival_by_age"],
            "access_by_age": outcomes["access_by_age"],
        }

    def _ensure_final(self, state: SessionState) -> dict:
        if state.final is not None:
            return state.final
        robust_history = []
        random_history = []
        for answer in state.answers:
            if answer["kind"] != "pairwise":
                continue
            q = answer["query"]
            entry = (Query(q[0], q[1]), answer["response"])
            if answer["arm"] == "robust":
                robust_history.append(entry)
            else:
                random_history.append(entry)
        gamma = gamma_schedule(self.noise, self.k)
        robust_rec = recommend(self.alternatives, robust_history, gamma)
        if not robust_rec.feasible:
            robust_rec = recommend(self.alternatives, [], 0.0)
        random_rec = recommend(self.alternatives, random_history, gamma)
        if not random_rec.feasible:
            random_rec = recommend(self.alternatives, [], 0.0)
        final = {
            "robust_index": robust_rec.index,
            "random_index": random_rec.index,
            "z_robust": robust_rec.value,
            "z_random": random_rec.value,
            "swapped": bool(state.side_orders[2 * self.k]),
        }
        self.log.append(
            {
                "v": 1,
                "type": "final_computed",
                "ts": self.clock(),
                "id": state.session_id,
                "data": final,
            }
        )
        state.final = final
        return final

    # -- API operations ----------------------------------------------------

    def next_step(self, session_id: str, token: str | None) -> dict:
        state = self._get(session_id, token)
        if state.status == "expired":
            raise ServiceError(410, "session expired")
        step = state.step_index
        base = {"v": 1, "step": step, "total_steps": self.total_steps}
        if state.status == "completed" or step >= self.total_steps:
            return {**base, "kind": "done"}
        kind, arm, arm_index = self._step_kind(state, step)
        if kind == "crt":
            return {
                **base,
                "kind": "crt",
                "question_index": arm_index,
                "question": CRT_QUESTIONS[arm_index],
            }
        if kind == "final":
            final = self._ensure_final(state)
            first, second = final["robust_index"], final["random_index"]
            swapped = final["swapped"]
        else:
            query = self._query_for_step(state, arm, arm_index)
            first, second = query.first, query.second
            swapped = state.side_orders[self._pairwise_index(state, step)]
        left, right = (second, first) if swapped else (first, second)
        return {
            **base,
            "kind": kind,
            "left": self._card(left),
            "right": self._card(right),
        }

    def submit_answer(
        self,
        session_id: str,
        token: str | None,
        step: int,
        response: str | None = None,
        text: str | None = None,
        elapsed_ms: float = 0.0,
    ) -> dict:
        state = self._get(session_id, token)
        if state.status == "expired":
            raise ServiceError(410, "session expired")
        if state.status == "completed" and step != state.step_index - 1:
            raise ServiceError(409, "session already completed")

        if step == state.step_index - 1 and state.answers:
            previous = state.answers[-1]
            if (
                previous["step"] == step
                and previous.get("raw_response") == response
                and previous.get("text") == text
            ):
                return {"v": 1, "ok": True, "duplicate": True}
            raise ServiceError(409, "step already answered differently")
        if step != state.step_index:
            raise ServiceError(409, f"expected step {state.step_index}, got {step}")

        kind, arm, arm_index = self._step_kind(state, step)
        if kind == "crt":
            if response is not None:
                raise ServiceError(400, "free-text step takes no pairwise response")
            if text is None or not text.strip():
                raise ServiceError(400, "free-text answer required")
            record = {
                "step": step,
                "kind": "crt",
                "arm": None,
                "query": None,
                "swapped": None,
                "response": None,
                "raw_response": None,
                "text": text,
                "elapsed_ms": float(elapsed_ms),
            }
        else:
            if response not in ("left", "indifferent", "right"):
                raise ServiceError(400, "response must be left, indifferent or right")
            if text is not None:
                raise ServiceError(400, "pairwise step takes no free text")
            if kind == "final":
                final = self._ensure_final(state)
                query_pair = [final["robust_index"], final["random_index"]]
                swapped = final["swapped"]
            else:
                query = self._query_for_step(state, arm, arm_index)
                query_pair = list(query.as_pair())
                swapped = state.side_orders[self._pairwise_index(state, step)]
            # unmap the on-screen side to the canonical first/second order
            if response == "indifferent":
                canonical = 0
            elif (response == "left") != swapped:
                canonical = 1
            else:
                canonical = -1
            record = {
                "step": step,
                "kind": kind,
                "arm": arm,
                "query": query_pair,
                "swapped": swapped,
                "response": canonical,
                "raw_response": response,
                "text": None,
                "elapsed_ms": float(elapsed_ms),
                "off_table": state.off_table if arm == "robust" else False,
            }

        self.log.append(
            {
                "v": 1,
                "type": "answer",
                "ts": self.clock(),
                "id": session_id,
                "data": record,
            }
        )
        state.answers.append(record)
        state.step_index = step + 1
        if kind == "pairwise" and arm == "robust":
            state.robust_path.append(record["response"])
        completed = state.step_index >= self.total_steps
        if completed:
            state.status = "completed"
            state.completed_at = self.clock()
            self.log.append(
                {
                    "v": 1,
                    "type": "completed",
                    "ts": state.completed_at,
                    "id": session_id,
                    "data": {"completed_at": state.completed_at},
                }
            )
        return {"v": 1, "ok": True, "completed": completed}

    def status(self, session_id: str, token: str | None) -> dict:
        state = self._get(session_id, token)
        return {
            "v": 1,
            "id": state.session_id,
            "status": state.status,
            "step": state.step_index,
            "total_steps": self.total_steps,
            "group": state.group,
        }

    # -- export -----------------------------------------------------------

    def session_record(self, state: SessionState) -> SessionRecord:
        self._expire_if_due(state)
        steps = [
            StepRecord(
                step=a["step"],
                kind=a["kind"],
                arm=a["arm"],
                query=tuple(a["query"]) if a["query"] else None,
                swapped=a["swapped"],
                response=a["response"],
                text=a["text"],
                elapsed_ms=a["elapsed_ms"],
            )
            for a in state.answers
        ]
        final = None
        if state.final is not None:
            final_response = None
            for a in state.answers:
                if a["kind"] == "final":
                    final_response = a["response"]
            final = FinalComparison(
                robust_index=state.final["robust_index"],
                random_index=state.final["random_index"],
                z_robust=state.final["z_robust"],
                z_random=state.final["z_random"],
                swapped=state.final["swapped"],
                response=final_response,
            )
        return SessionRecord(
            session_id=state.session_id,
            worker_id=state.worker_id,
            group=state.group,
            status=state.status,
            demographics=state.demographics,
            created_at=state.created_at,
            completed_at=state.completed_at,
            steps=steps,
            final=final,
        )

    def export_lines(self):
        for session_id in sorted(self.sessions):
            record = self.session_record(self.sessions[session_id])
            yield json.dumps(record.to_json_dict())


def create_app(service: SurveyService):
    """FastAPI wiring over the service core."""
    from fastapi import FastAPI, Header, Request
    from fastapi.responses import JSONResponse, PlainTextResponse

    app = FastAPI(title="prefelicit survey service")

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status_code, content={"v": 1, "error": exc.detail}
        )

    def bearer(value: str | None) -> str | None:
        if value and value.lower().startswith("bearer "):
            return value[7:]
        return value

    @app.get("/healthz")
    def healthz():
        return {"v": 1, "status": "ok"}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        if body.demographics is None:
            raise ServiceError(400, "demographics block required")
        return service.create_session(body.demographics, body.worker_id)

    @app.get("/sessions/{session_id}/next")
    def next_step(session_id: str, authorization: str | None = Header(None)):
        return service.next_step(session_id, bearer(authorization))

    @app.post("/sessions/{session_id}/answers")
    def submit_answer(
        session_id: str,
        body: AnswerBody,
        authorization: str | None = Header(None),
    ):
        return service.submit_answer(
            session_id,
            bearer(authorization),
            step=body.step,
            response=body.response,
            text=body.text,
            elapsed_ms=body.elapsed_ms,
        )

    @app.get("/sessions/{session_id}/status")
    def status(session_id: str, authorization: str | None = Header(None)):
        return service.status(session_id, bearer(authorization))

    @app.get("/export")
    def export(authorization: str | None = Header(None)):
        token = bearer(authorization)
        if service.config.admin_token is None or token != service.config.admin_token:
            raise ServiceError(403, "admin token required")
        body = "\n".join(service.export_lines())
        return PlainTextResponse(body + ("\n" if body else ""))

    return app
