"""Answer likelihood model and the incremental label posterior.

The response model mixes a smoothed empirical answer distribution with an
encoder-parameterized softmax. Beliefs are kept as normalized log
probabilities; each observed (question, answer) multiplies in the response
likelihood and renormalizes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import NOT_VISIBLE, Corpus, DataError, Question
from .encoder import EncoderModel, encode, qr_text

PROB_FLOOR = 1e-6
_LOG_TINY = 1e-300


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


class ResponseModel:
    """p(r | q, y): lambda * empirical + (1 - lambda) * parameterized.

    Immutable after construction. Labels in `masked_labels` have their
    empirical counts hidden, so their likelihoods come from the encoder
    alone (the zero-shot configuration).
    """

    def __init__(
        self,
        corpus: Corpus,
        encoder: EncoderModel | None,
        lam: float = 0.5,
        alpha: float = 0.1,
        counts: dict | None = None,
        masked_labels: frozenset[str] = frozenset(),
    ):
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.corpus = corpus
        self.encoder = encoder
        self.lam = lam
        self.alpha = alpha
        self.counts = counts if counts is not None else count_responses(corpus)
        self.masked_labels = frozenset(masked_labels)
        self._score_cache: dict[str, np.ndarray] = {}
        self._tables: dict[str, np.ndarray] | None = None

    def masked(self, label_ids) -> "ResponseModel":
        rm = ResponseModel(
            self.corpus,
            self.encoder,
            lam=self.lam,
            alpha=self.alpha,
            counts=self.counts,
            masked_labels=self.masked_labels | set(label_ids),
        )
        rm._score_cache = self._score_cache
        return rm

    def with_wb(self, w: float, b: float) -> "ResponseModel":
        """Copy with updated scalar parameters; shares counts and score cache."""
        if self.encoder is None:
            raise ValueError("no encoder to update")
        rm = ResponseModel(
            self.corpus,
            dataclasses.replace(self.encoder, w=w, b=b),
            lam=self.lam,
            alpha=self.alpha,
            counts=self.counts,
            masked_labels=self.masked_labels,
        )
        rm._score_cache = self._score_cache
        return rm

    # -- scalar probabilities ------------------------------------------------

    def _empirical_row(self, question: Question, label_id: str) -> np.ndarray | None:
        if label_id in self.masked_labels:
            return None
        row = self.counts.get((label_id, question.id), {})
        totals = np.array([row.get(r, 0.0) for r in question.answers], dtype=float)
        if totals.sum() == 0 and self.alpha == 0:
            return None
        smoothed = totals + self.alpha
        return smoothed / smoothed.sum()

    def _scores(self, question: Question) -> np.ndarray:
        """Encoder scores S(tag#answer, label) for every (label, answer)."""
        if question.id not in self._score_cache:
            if self.encoder is None:
                raise ValueError("parameterized response requires an encoder")
            tag = question.tag_text()
            qr_vecs = np.stack([encode(self.encoder, qr_text(tag, r)) for r in question.answers])
            lab_vecs = np.stack([encode(self.encoder, lab.text) for lab in self.corpus.labels])
            self._score_cache[question.id] = lab_vecs @ qr_vecs.T  # N x |R|
        return self._score_cache[question.id]

    def _param_row(self, question: Question, label_id: str) -> np.ndarray:
        s = self._scores(question)[self.corpus.label_index[label_id]]
        logits = self.encoder.w * s + self.encoder.b
        logits = logits - logits.max()
        exp = np.exp(logits)
        return exp / exp.sum()


def count_responses(corpus: Corpus, label_ids=None) -> dict:
    """Empirical (label, question) -> {answer: count} from annotation records.

    "not visible" rows are skipped: they carry no attribute information.
    """
    wanted = set(label_ids) if label_ids is not None else None
    counts: dict[tuple[str, str], dict[str, float]] = {}
    for rec in corpus.records:
        if wanted is not None and rec.label_id not in wanted:
            continue
        for qid, answer in rec.qa_pairs:
            if answer == NOT_VISIBLE:
                continue
            row = counts.setdefault((rec.label_id, qid), {})
            row[answer] = row.get(answer, 0.0) + 1.0
    return counts


def empirical_response(rm: ResponseModel, question: Question, label_id: str) -> np.ndarray | None:
    """Smoothed empirical answer distribution, or None when unobserved and alpha=0."""
    return rm._empirical_row(question, label_id)


def param_response(rm: ResponseModel, question: Question, answer: str, label_id: str) -> float:
    """Encoder softmax probability of `answer` among R(q) for this label."""
    if answer not in question.answers:
        raise ValueError(f"answer {answer!r} not in R({question.id})")
    return float(rm._param_row(question, label_id)[question.answers.index(answer)])


def response_prob(rm: ResponseModel, question: Question, answer: str, label_id: str) -> float:
    """Mixture probability; falls back to the parameterized term when the
    empirical distribution is absent."""
    if answer not in question.answers:
        raise ValueError(f"answer {answer!r} not in R({question.id})")
    idx = question.answers.index(answer)
    phat = rm._empirical_row(question, label_id)
    if phat is None:
        return float(rm._param_row(question, label_id)[idx])
    if rm.lam == 1.0:
        return float(phat[idx])
    return float(rm.lam * phat[idx] + (1.0 - rm.lam) * rm._param_row(question, label_id)[idx])


def likelihood_table(rm: ResponseModel, question: Question) -> np.ndarray:
    """N x |R(q)| matrix of response_prob values, cached per question."""
    if rm._tables is None:
        rm._tables = {}
    if question.id not in rm._tables:
        n = rm.corpus.n_labels
        table = np.empty((n, len(question.answers)))
        need_param = rm.lam < 1.0
        phat_rows = [rm._empirical_row(question, lab.id) for lab in rm.corpus.labels]
        if not need_param and any(row is None for row in phat_rows):
            need_param = True
        ptilde = None
        if need_param:
            s = rm._scores(question)
            logits = rm.encoder.w * s + rm.encoder.b
            logits = logits - logits.max(axis=1, keepdims=True)
            exp = np.exp(logits)
            ptilde = exp / exp.sum(axis=1, keepdims=True)
        for i, phat in enumerate(phat_rows):
            if phat is None:
                table[i] = ptilde[i]
            elif rm.lam == 1.0:
                table[i] = phat
            else:
                table[i] = rm.lam * phat + (1.0 - rm.lam) * ptilde[i]
        rm._tables[question.id] = table
    return rm._tables[question.id]


@dataclass
class BeliefState:
    log_belief: np.ndarray  # normalized, catalog order
    history: list[tuple[str, str]] = field(default_factory=list)
    asked: set[str] = field(default_factory=set)
    skipped_groups: set[str] = field(default_factory=set)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_belief)


def init_belief(prior: np.ndarray, query: str = "") -> BeliefState:
    """Start a belief from a prior distribution (the initial-query posterior)."""
    prior = np.asarray(prior, dtype=float)
    if prior.ndim != 1 or prior.size == 0:
        raise ValueError("prior must be a non-empty vector")
    if np.any(prior < -1e-12) or abs(prior.sum() - 1.0) > 1e-6:
        raise ValueError("prior is not a probability distribution")
    log_b = np.log(np.maximum(prior, _LOG_TINY))
    log_b -= _logsumexp(log_b)
    return BeliefState(log_belief=log_b)


def update_belief(state: BeliefState, question: Question, answer: str, rm: ResponseModel) -> BeliefState:
    """Multiply in p(answer | question, label) and renormalize.

    A "not visible" answer leaves the belief unchanged and marks the
    question's part group as skipped.
    """
    if question.id in state.asked:
        raise ValueError(f"question {question.id!r} was already asked")
    if not question.accepts(answer):
        raise ValueError(f"answer {answer!r} not in R({question.id}) = {question.answers}")

    history = state.history + [(question.id, answer)]
    asked = state.asked | {question.id}
    skipped = set(state.skipped_groups)
    if answer == NOT_VISIBLE:
        skipped.add(question.group)
        return BeliefState(
            log_belief=state.log_belief.copy(), history=history, asked=asked, skipped_groups=skipped
        )

    col = question.answers.index(answer)
    lik = likelihood_table(rm, question)[:, col]
    log_b = state.log_belief + np.log(np.maximum(lik, PROB_FLOOR))
    log_b -= _logsumexp(log_b)
    return BeliefState(log_belief=log_b, history=history, asked=asked, skipped_groups=skipped)


def top_k(state: BeliefState, corpus: Corpus, k: int) -> list[tuple[str, float]]:
    """Top-k (label_id, probability), descending; ties keep catalog order.

    Padded with ("", 0.0) entries when the catalog has fewer than k labels.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    probs = state.probs()
    order = np.argsort(-probs, kind="stable")[:k]
    out: list[tuple[str, float]] = [("", 0.0)] * k
    for slot, idx in enumerate(order):
        out[slot] = (corpus.labels[int(idx)].id, float(probs[idx]))
    return out


def predict(state: BeliefState, corpus: Corpus) -> str:
    """Argmax label id; exact probability ties break to the lowest label id."""
    probs = state.probs()
    best = probs.max()
    return min(corpus.labels[i].id for i in np.flatnonzero(probs == best))


def warm_tables(rm: ResponseModel, corpus: Corpus) -> None:
    """Precompute every question's likelihood table (read-only use thereafter)."""
    for q in corpus.questions:
        likelihood_table(rm, q)


def save_responses(rm: ResponseModel, path: str | Path) -> None:
    nested: dict[str, dict[str, dict[str, float]]] = {}
    for (label_id, qid), row in rm.counts.items():
        nested.setdefault(label_id, {})[qid] = row
    payload = {
        "version": 1,
        "lambda": rm.lam,
        "alpha": rm.alpha,
        "counts": nested,
        "masked_labels": sorted(rm.masked_labels),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_responses(path: str | Path, corpus: Corpus, encoder: EncoderModel | None) -> ResponseModel:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing response checkpoint: {p}")
    payload = json.loads(p.read_text(encoding="utf-8"))
    if payload.get("version") != 1:
        raise DataError(f"unsupported response checkpoint version: {payload.get('version')!r}")
    counts = {}
    for label_id, per_q in payload["counts"].items():
        for qid, row in per_q.items():
            counts[(label_id, qid)] = {a: float(c) for a, c in row.items()}
    return ResponseModel(
        corpus,
        encoder,
        lam=float(payload["lambda"]),
        alpha=float(payload["alpha"]),
        counts=counts,
        masked_labels=frozenset(payload.get("masked_labels", [])),
    )
