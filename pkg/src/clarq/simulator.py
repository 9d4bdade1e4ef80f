"""Scripted user built from held-out annotation records.

The simulator owns its own answer distribution p'(r | q, y), estimated with
Laplace smoothing from records the engine never trains on. During an episode
it picks a hidden target, utters one of that target's recorded queries, and
answers questions by sampling p'. "not visible" answers are kept when the
records contain them, so grouped questions can come back unanswerable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import NOT_VISIBLE, Corpus, DataError, Question


@dataclass
class Simulator:
    corpus: Corpus
    label_ids: list[str]  # targets it can play, in catalog order
    queries: dict[str, list[str]]
    counts: dict[tuple[str, str], dict[str, float]]
    alpha: float = 1.0


def fit_simulator(
    corpus: Corpus, label_ids, alpha: float = 1.0, encoder_train_labels=()
) -> Simulator:
    """Estimate p' from the records of `label_ids` only.

    `encoder_train_labels` names the labels whose records trained the
    engine's encoder; any overlap with the simulator's labels is refused so
    the simulator stays a genuinely held-out user.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    overlap = set(label_ids) & set(encoder_train_labels)
    if overlap:
        raise DataError(
            f"simulator labels overlap encoder training labels: {sorted(overlap)[:5]}"
        )
    wanted = [lid for lid in (lab.id for lab in corpus.labels) if lid in set(label_ids)]
    queries: dict[str, list[str]] = {}
    counts: dict[tuple[str, str], dict[str, float]] = {}
    for rec in corpus.records:
        if rec.label_id not in set(wanted):
            continue
        queries.setdefault(rec.label_id, []).extend(rec.initial_queries)
        for qid, answer in rec.qa_pairs:
            row = counts.setdefault((rec.label_id, qid), {})
            row[answer] = row.get(answer, 0.0) + 1.0
    playable = [lid for lid in wanted if queries.get(lid)]
    if not playable:
        raise DataError("simulator has no labels with recorded queries")
    if alpha == 0:
        # Without smoothing the simulator must have seen every pair it could
        # be asked about, otherwise it has no way to answer.
        for lid in playable:
            for q in corpus.questions:
                row = counts.get((lid, q.id))
                if not row or sum(row.values()) == 0:
                    raise DataError(
                        f"alpha=0 but no observations for ({lid!r}, {q.id!r})"
                    )
    return Simulator(corpus=corpus, label_ids=playable, queries=queries, counts=counts, alpha=alpha)


def response_dist(sim: Simulator, question: Question, label_id: str) -> tuple[list[str], np.ndarray]:
    """Support and probabilities of p'(r | q, y).

    Support is R(q), plus "not visible" when the records used it for this
    pair (grouped questions only). Unobserved pairs fall back to uniform.
    """
    row = sim.counts.get((label_id, question.id), {})
    support = list(question.answers)
    if question.group is not None and row.get(NOT_VISIBLE, 0.0) > 0:
        support.append(NOT_VISIBLE)
    raw = np.array([row.get(r, 0.0) for r in support], dtype=float)
    smoothed = raw + sim.alpha
    if smoothed.sum() == 0:
        raise DataError(f"no observations and alpha=0 for ({label_id!r}, {question.id!r})")
    return support, smoothed / smoothed.sum()


def sample_target(sim: Simulator, rng: np.random.Generator) -> str:
    return sim.label_ids[int(rng.integers(len(sim.label_ids)))]


def sample_query(sim: Simulator, label_id: str, rng: np.random.Generator) -> str:
    pool = sim.queries.get(label_id)
    if not pool:
        raise DataError(f"no recorded queries for label {label_id!r}")
    return pool[int(rng.integers(len(pool)))]


def start_episode(sim: Simulator, rng: np.random.Generator) -> tuple[str, str]:
    """(hidden target label id, uttered initial query)."""
    target = sample_target(sim, rng)
    return target, sample_query(sim, target, rng)


def sample_response(sim: Simulator, question: Question, label_id: str, rng: np.random.Generator) -> str:
    support, probs = response_dist(sim, question, label_id)
    return support[int(rng.choice(len(support), p=probs))]


def save_simulator(sim: Simulator, path: str | Path) -> None:
    nested: dict[str, dict[str, dict[str, float]]] = {}
    for (label_id, qid), row in sim.counts.items():
        nested.setdefault(label_id, {})[qid] = row
    payload = {
        "version": 1,
        "alpha": sim.alpha,
        "label_ids": sim.label_ids,
        "queries": sim.queries,
        "counts": nested,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_simulator(path: str | Path, corpus: Corpus) -> Simulator:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing simulator checkpoint: {p}")
    payload = json.loads(p.read_text(encoding="utf-8"))
    if payload.get("version") != 1:
        raise DataError(f"unsupported simulator checkpoint version: {payload.get('version')!r}")
    counts = {}
    for label_id, per_q in payload["counts"].items():
        for qid, row in per_q.items():
            counts[(label_id, qid)] = {a: float(c) for a, c in row.items()}
    return Simulator(
        corpus=corpus,
        label_ids=list(payload["label_ids"]),
        queries={k: list(v) for k, v in payload["queries"].items()},
        counts=counts,
        alpha=float(payload["alpha"]),
    )
