"""Session-oriented HTTP API for the live clarification loop.

Holds sessions in memory behind per-session locks, shares the engine
read-only, and appends finished transcripts and ratings to a JSON-lines
file per UTC day. The ground-truth label of a scenario session is never
put in a payload until the session is done.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .belief import BeliefState, predict, top_k, update_belief, warm_tables
from .dataset import NOT_VISIBLE, Question
from .evaluation import Engine
from .selection import select_question

AWAITING_QUERY = "awaiting_query"
AWAITING_ANSWER = "awaiting_answer"
DONE = "done"


@dataclass
class Session:
    session_id: str
    scenario: str | None  # target label id, when grounded
    status: str = AWAITING_QUERY
    belief: BeliefState | None = None
    turn: int = 0
    query: str = ""
    qa: list[tuple[str, str]] = field(default_factory=list)
    turn_top1: list[tuple[str, float]] = field(default_factory=list)
    pending: Question | None = None
    prediction: str | None = None
    rated: bool = False
    touched: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


class CreateBody(BaseModel):
    scenario_id: str | None = None


class QueryBody(BaseModel):
    text: str


class AnswerBody(BaseModel):
    answer: str


class RatingBody(BaseModel):
    naturalness: int
    rationality: int


class TranscriptLog:
    """Append-only JSON-lines sink, one file per UTC day."""

    def __init__(self, log_dir: str | Path):
        self.dir = Path(log_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path_for_today(self) -> Path:
        day = datetime.now(timezone.utc).strftime("%Y%m%d")
        return self.dir / f"transcripts-{day}.jsonl"

    def append(self, row: dict) -> None:
        row = dict(row)
        row["ts"] = datetime.now(timezone.utc).isoformat()
        with self._lock:
            with open(self.path_for_today(), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def create_app(
    engine: Engine,
    termination,
    log_dir: str | Path | None = None,
    ttl_seconds: float = 1800.0,
    seed: int = 0,
) -> FastAPI:
    """Build the FastAPI app around a loaded engine.

    `termination` is any stop rule with .stop(state, turn, engine); the
    serve command wires a trained policy, a fixed turn count, or a belief
    threshold.
    """
    warm_tables(engine.rm, engine.corpus)
    app = FastAPI(title="clarification service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    scenario_rng = np.random.default_rng(seed)
    log = TranscriptLog(log_dir) if log_dir is not None else None

    @app.exception_handler(HTTPException)
    def _http_error(request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"status": "error", "turn": getattr(exc, "turn", 0), "detail": exc.detail},
        )

    def _get(session_id: str) -> Session:
        with registry_lock:
            sess = sessions.get(session_id)
            if sess is None:
                raise HTTPException(404, f"unknown session {session_id!r}")
            if time.monotonic() - sess.touched > ttl_seconds:
                del sessions[session_id]
                raise HTTPException(410, f"session {session_id!r} expired")
            sess.touched = time.monotonic()
            return sess

    def _scenario_text(label_id: str) -> str:
        pool = [
            q
            for rec in engine.corpus.records_for([label_id])
            for q in rec.initial_queries
        ]
        if not pool:
            raise HTTPException(404, f"no recorded scenario text for label {label_id!r}")
        with registry_lock:
            return pool[int(scenario_rng.integers(len(pool)))]

    def _question_payload(q: Question) -> dict:
        return {
            "id": q.id,
            "text": q.text,
            "answers": list(q.answers),
            "allow_not_visible": q.group is not None,
        }

    def _advance(sess: Session) -> dict:
        """Consult the stop rule, then either pose a question or finish."""
        state = sess.belief
        stop = termination.stop(state, sess.turn, engine)
        nxt = None if stop else select_question(state, engine.corpus, engine.rm)
        if stop or nxt is None:
            sess.status = DONE
            sess.prediction = predict(state, engine.corpus)
            sess.pending = None
            payload = {
                "status": DONE,
                "turn": sess.turn,
                "action": "stop",
                "prediction": _prediction_payload(sess),
            }
            if log is not None:
                log.append(
                    {
                        "type": "transcript",
                        "session_id": sess.session_id,
                        "scenario": sess.scenario,
                        "query": sess.query,
                        "qa": [list(pair) for pair in sess.qa],
                        "turn_top1": [[lid, p] for lid, p in sess.turn_top1],
                        "prediction": sess.prediction,
                        "turns": sess.turn,
                    }
                )
            return payload
        sess.pending = nxt
        sess.status = AWAITING_ANSWER
        return {
            "status": AWAITING_ANSWER,
            "turn": sess.turn,
            "action": "ask",
            "question": _question_payload(nxt),
        }

    def _prediction_payload(sess: Session) -> dict:
        top3 = [
            {"label_id": lid, "text": engine.corpus.label(lid).text if lid else "", "probability": p}
            for lid, p in top_k(sess.belief, engine.corpus, min(3, engine.corpus.n_labels))
        ]
        out = {
            "label_id": sess.prediction,
            "text": engine.corpus.label(sess.prediction).text,
            "top3": top3,
        }
        if sess.scenario is not None:
            out["target"] = {
                "label_id": sess.scenario,
                "text": engine.corpus.label(sess.scenario).text,
            }
        return out

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "turn": 0}

    @app.get("/labels/{label_id}")
    def get_label(label_id: str):
        if label_id not in engine.corpus.label_index:
            raise HTTPException(404, f"unknown label {label_id!r}")
        lab = engine.corpus.label(label_id)
        return {"status": "ok", "turn": 0, "label": {"label_id": lab.id, "text": lab.text}}

    @app.post("/sessions")
    def create_session(body: CreateBody | None = None):
        scenario_id = body.scenario_id if body is not None else None
        scenario_text = None
        if scenario_id is not None:
            if scenario_id not in engine.corpus.label_index:
                raise HTTPException(404, f"unknown scenario {scenario_id!r}")
            scenario_text = _scenario_text(scenario_id)
        sess = Session(session_id=uuid.uuid4().hex, scenario=scenario_id)
        with registry_lock:
            sessions[sess.session_id] = sess
        out = {"status": sess.status, "turn": 0, "session_id": sess.session_id}
        if scenario_text is not None:
            out["scenario_text"] = scenario_text
        return out

    @app.post("/sessions/{session_id}/query")
    def submit_query(session_id: str, body: QueryBody):
        sess = _get(session_id)
        with sess.lock:
            if sess.status != AWAITING_QUERY:
                raise HTTPException(409, f"session is {sess.status}, expected {AWAITING_QUERY}")
            if not body.text.strip():
                raise HTTPException(400, "query text must be non-empty")
            sess.query = body.text
            sess.belief = engine.initial_belief(body.text)
            return _advance(sess)

    @app.post("/sessions/{session_id}/answer")
    def submit_answer(session_id: str, body: AnswerBody):
        sess = _get(session_id)
        with sess.lock:
            if sess.status != AWAITING_ANSWER or sess.pending is None:
                raise HTTPException(409, f"session is {sess.status}, expected {AWAITING_ANSWER}")
            q = sess.pending
            if not q.accepts(body.answer):
                valid = list(q.answers) + ([NOT_VISIBLE] if q.group is not None else [])
                raise HTTPException(400, f"answer must be one of {valid}")
            sess.belief = update_belief(sess.belief, q, body.answer, engine.rm)
            sess.qa.append((q.id, body.answer))
            sess.turn += 1
            sess.turn_top1.append(top_k(sess.belief, engine.corpus, 1)[0])
            return _advance(sess)

    @app.post("/sessions/{session_id}/rating")
    def submit_rating(session_id: str, body: RatingBody):
        sess = _get(session_id)
        with sess.lock:
            if sess.status != DONE:
                raise HTTPException(409, f"session is {sess.status}, expected {DONE}")
            for name, score in (("naturalness", body.naturalness), ("rationality", body.rationality)):
                if not 1 <= score <= 5:
                    raise HTTPException(400, f"{name} must be in 1..5, got {score}")
            if log is not None:
                log.append(
                    {
                        "type": "rating",
                        "session_id": sess.session_id,
                        "naturalness": body.naturalness,
                        "rationality": body.rationality,
                    }
                )
            sess.rated = True
            return {"status": sess.status, "turn": sess.turn, "recorded": True}

    return app
