"""Interaction driver, metrics, and baseline strategies.

A strategy is (prior source, question selector, termination rule). The
driver produces Transcripts; metrics aggregate Accuracy@k and turn counts
over episodes and seeds. Baselines cover: no interaction (encoder prior or
BM25), random questions, no initial query, threshold / fixed-turn
termination, the empirical-only response model, and zero-shot masking.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import (
    BeliefState,
    ResponseModel,
    init_belief,
    predict,
    top_k,
    update_belief,
    warm_tables,
)
from .dataset import Corpus, Question
from .encoder import EncoderModel, prior, tokenize
from .policy import STOP, PolicyModel, decide
from .selection import select_question
from .simulator import Simulator, sample_query, sample_response, sample_target


@dataclass
class Engine:
    corpus: Corpus
    encoder: EncoderModel | None
    rm: ResponseModel
    policy: PolicyModel | None = None

    def initial_belief(self, query: str, uniform: bool = False) -> BeliefState:
        n = self.corpus.n_labels
        if uniform or self.encoder is None:
            return init_belief(np.full(n, 1.0 / n))
        return init_belief(prior(self.encoder, query, self.corpus.labels))


@dataclass
class SimResponder:
    """Answers from the simulator's held-out response distribution."""

    sim: Simulator
    target: str
    query: str

    def respond(self, question: Question, rng: np.random.Generator) -> str:
        return sample_response(self.sim, question, self.target, rng)


# -- termination rules -------------------------------------------------------


@dataclass
class FixedStop:
    turns: int

    def stop(self, state: BeliefState, turn: int, engine: Engine) -> bool:
        return turn >= self.turns


@dataclass
class ThresholdStop:
    threshold: float
    max_turns: int = 10

    def stop(self, state: BeliefState, turn: int, engine: Engine) -> bool:
        return turn >= self.max_turns or float(state.probs().max()) >= self.threshold


@dataclass
class PolicyStop:
    policy: PolicyModel

    def stop(self, state: BeliefState, turn: int, engine: Engine) -> bool:
        if turn >= self.policy.max_turns:
            return True
        tk = np.array([p for _, p in top_k(state, engine.corpus, self.policy.k)])
        return decide(self.policy, tk, turn, mode="greedy") == STOP


@dataclass
class Transcript:
    target: str
    query: str
    turns: list[tuple[str, str]]
    prediction: str
    turn_top1: list[tuple[str, float]]  # after each turn
    final_topk: list[tuple[str, float]]

    @property
    def n_turns(self) -> int:
        return len(self.turns)


_FINAL_K = 10


def run_interaction(
    engine: Engine,
    responder,
    termination,
    rng: np.random.Generator,
    selector: str = "ig",
    uniform_prior: bool = False,
) -> Transcript:
    """Drive one dialogue to completion and score the final belief.

    selector "ig" picks by information gain and stops early if the bank is
    exhausted; "random" draws from the whole bank with replacement, and a
    repeated question consumes the turn without a belief update.
    """
    corpus = engine.corpus
    state = engine.initial_belief(responder.query, uniform=uniform_prior)
    turns: list[tuple[str, str]] = []
    turn_top1: list[tuple[str, float]] = []
    turn = 0
    while not termination.stop(state, turn, engine):
        if selector == "ig":
            question = select_question(state, corpus, engine.rm)
            if question is None:
                break
        elif selector == "random":
            question = corpus.questions[int(rng.integers(len(corpus.questions)))]
        else:
            raise ValueError(f"unknown selector {selector!r}")
        answer = responder.respond(question, rng)
        if question.id not in state.asked:
            state = update_belief(state, question, answer, engine.rm)
        turns.append((question.id, answer))
        turn_top1.append(top_k(state, corpus, 1)[0])
        turn += 1
    k = min(_FINAL_K, corpus.n_labels)
    return Transcript(
        target=responder.target,
        query=responder.query,
        turns=turns,
        prediction=predict(state, corpus),
        turn_top1=turn_top1,
        final_topk=top_k(state, corpus, k),
    )


def replay(engine: Engine, query: str, qa: list[tuple[str, str]], uniform_prior: bool = False):
    """Re-run a recorded dialogue through the same update path.

    Returns (per-turn top-1 list, prediction); used to check that a live
    service added no hidden state.
    """
    state = engine.initial_belief(query, uniform=uniform_prior)
    tops: list[tuple[str, float]] = []
    for qid, answer in qa:
        if qid not in state.asked:
            state = update_belief(state, engine.corpus.question(qid), answer, engine.rm)
        tops.append(top_k(state, engine.corpus, 1)[0])
    return tops, predict(state, engine.corpus)


def accuracy_at_k(transcripts: list[Transcript], k: int) -> float:
    """Fraction of episodes whose final top-k contains the target."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not transcripts:
        return 0.0
    hits = sum(t.target in [lid for lid, _ in t.final_topk[:k]] for t in transcripts)
    return hits / len(transcripts)


def mean_turns(transcripts: list[Transcript]) -> float:
    if not transcripts:
        return 0.0
    return float(np.mean([t.n_turns for t in transcripts]))


# -- BM25 --------------------------------------------------------------------


def bm25_rank(corpus_texts: list[str], query: str, k1: float = 1.2, b: float = 0.75) -> list[int]:
    """Document indices ranked by BM25 score, ties kept in corpus order."""
    if not corpus_texts:
        raise ValueError("empty corpus")
    docs = [tokenize(t) for t in corpus_texts]
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n or 1.0
    df = Counter()
    for d in docs:
        df.update(set(d))
    scores = np.zeros(n)
    for tok in tokenize(query):
        if tok not in df:
            continue
        idf = math.log((n - df[tok] + 0.5) / (df[tok] + 0.5) + 1.0)
        for i, d in enumerate(docs):
            tf = d.count(tok)
            if tf == 0:
                continue
            denom = tf + k1 * (1 - b + b * len(d) / avgdl)
            scores[i] += idf * tf * (k1 + 1) / denom
    return list(np.argsort(-scores, kind="stable"))


# -- suite -------------------------------------------------------------------


@dataclass
class SuiteConfig:
    strategies: list[str] = field(
        default_factory=lambda: ["full", "no_initial_query", "random", "no_interaction"]
    )
    episodes: int = 500
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    random_turns: int = 5
    threshold: float = 0.9
    fixed_turns: int = 4
    max_turns: int = 10


@dataclass
class EvalReport:
    strategy: str
    acc1_mean: float
    acc1_std: float
    acc3_mean: float
    acc3_std: float
    mean_turns: float
    per_seed: list[dict]

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "acc1_mean": self.acc1_mean,
            "acc1_std": self.acc1_std,
            "acc3_mean": self.acc3_mean,
            "acc3_std": self.acc3_std,
            "mean_turns": self.mean_turns,
            "per_seed": self.per_seed,
        }


def _parse_strategy(name: str, cfg: SuiteConfig) -> tuple[str, float | None]:
    if ":" in name:
        base, raw = name.split(":", 1)
        return base, float(raw)
    return name, None


def run_strategy(
    name: str,
    engine: Engine,
    sim: Simulator,
    seed: int,
    episodes: int,
    cfg: SuiteConfig,
) -> list[Transcript]:
    """All episodes of one strategy under one seed.

    Per-episode RNG streams are spawned up front, so the (target, query)
    sequence is identical across strategies for a given seed and results do
    not depend on execution order.
    """
    base, param = _parse_strategy(name, cfg)
    corpus = engine.corpus
    rm = engine.rm
    uniform = False
    selector = "ig"
    if base == "no_interaction":
        termination = FixedStop(0)
    elif base == "bm25":
        termination = None  # ranked directly, no belief loop
    elif base == "random":
        termination = FixedStop(int(param) if param is not None else cfg.random_turns)
        selector = "random"
    elif base == "no_initial_query":
        termination = PolicyStop(_require_policy(engine, name))
        uniform = True
    elif base == "full":
        termination = PolicyStop(_require_policy(engine, name))
    elif base == "threshold":
        termination = ThresholdStop(param if param is not None else cfg.threshold, cfg.max_turns)
    elif base == "fixed":
        termination = FixedStop(int(param) if param is not None else cfg.fixed_turns)
    elif base == "lambda1":
        rm = ResponseModel(
            corpus, engine.rm.encoder, lam=1.0, alpha=engine.rm.alpha,
            counts=engine.rm.counts, masked_labels=engine.rm.masked_labels,
        )
        termination = PolicyStop(_require_policy(engine, name))
    elif base == "zero_shot":
        heldout = set(corpus.split.dev) | set(corpus.split.test)
        rm = engine.rm.masked(heldout)
        termination = PolicyStop(_require_policy(engine, name))
    else:
        raise ValueError(f"unknown strategy {name!r}")

    eng = Engine(corpus, engine.encoder, rm, engine.policy)
    warm_tables(rm, corpus)
    streams = np.random.SeedSequence(seed).spawn(episodes)
    out: list[Transcript] = []
    for s in streams:
        rng = np.random.default_rng(s)
        target = sample_target(sim, rng)
        query = sample_query(sim, target, rng)
        if base == "bm25":
            ranked = bm25_rank([lab.text for lab in corpus.labels], query)
            k = min(_FINAL_K, corpus.n_labels)
            ids = [(corpus.labels[i].id, 0.0) for i in ranked[:k]]
            out.append(
                Transcript(
                    target=target, query=query, turns=[], prediction=ids[0][0],
                    turn_top1=[], final_topk=ids,
                )
            )
            continue
        responder = SimResponder(sim, target, query)
        out.append(
            run_interaction(eng, responder, termination, rng, selector=selector, uniform_prior=uniform)
        )
    return out


def _require_policy(engine: Engine, strategy: str) -> PolicyModel:
    if engine.policy is None:
        raise ValueError(f"strategy {strategy!r} needs a trained policy")
    return engine.policy


def evaluate_suite(engine: Engine, sim: Simulator, cfg: SuiteConfig) -> list[EvalReport]:
    """Run every configured strategy over all seeds; mean and sample stddev."""
    reports = []
    for name in cfg.strategies:
        per_seed = []
        for seed in cfg.seeds:
            ts = run_strategy(name, engine, sim, seed, cfg.episodes, cfg)
            per_seed.append(
                {
                    "seed": seed,
                    "episodes": len(ts),
                    "acc1": accuracy_at_k(ts, 1),
                    "acc3": accuracy_at_k(ts, 3),
                    "mean_turns": mean_turns(ts),
                }
            )
        acc1 = [row["acc1"] for row in per_seed]
        acc3 = [row["acc3"] for row in per_seed]
        turns = [row["mean_turns"] for row in per_seed]
        reports.append(
            EvalReport(
                strategy=name,
                acc1_mean=float(np.mean(acc1)) if per_seed else 0.0,
                acc1_std=float(np.std(acc1, ddof=1)) if len(per_seed) > 1 else 0.0,
                acc3_mean=float(np.mean(acc3)) if per_seed else 0.0,
                acc3_std=float(np.std(acc3, ddof=1)) if len(per_seed) > 1 else 0.0,
                mean_turns=float(np.mean(turns)) if per_seed else 0.0,
                per_seed=per_seed,
            )
        )
    return reports


def accuracy_vs_turns(
    engine: Engine,
    sim: Simulator,
    cfg: SuiteConfig,
    fixed_grid: list[int] = (),
    threshold_grid: list[float] = (),
    include_policy: bool = False,
) -> list[dict]:
    """Curve points (strategy, config, mean_turns, acc1, acc3)."""
    points = []
    for t in fixed_grid:
        rep = evaluate_suite(engine, sim, _clone_cfg(cfg, [f"fixed:{t}"]))[0]
        points.append(_point("fixed", str(t), rep))
    for th in threshold_grid:
        rep = evaluate_suite(engine, sim, _clone_cfg(cfg, [f"threshold:{th}"]))[0]
        points.append(_point("threshold", str(th), rep))
    if include_policy:
        rep = evaluate_suite(engine, sim, _clone_cfg(cfg, ["full"]))[0]
        points.append(_point("policy", "trained", rep))
    return points


def _clone_cfg(cfg: SuiteConfig, strategies: list[str]) -> SuiteConfig:
    return SuiteConfig(
        strategies=strategies,
        episodes=cfg.episodes,
        seeds=cfg.seeds,
        random_turns=cfg.random_turns,
        threshold=cfg.threshold,
        fixed_turns=cfg.fixed_turns,
        max_turns=cfg.max_turns,
    )


def _point(strategy: str, config: str, rep: EvalReport) -> dict:
    return {
        "strategy": strategy,
        "config": config,
        "mean_turns": rep.mean_turns,
        "acc1": rep.acc1_mean,
        "acc3": rep.acc3_mean,
    }


def confusion_matrix(transcripts: list[Transcript], corpus: Corpus) -> np.ndarray:
    """counts[target, prediction] over the given transcripts."""
    n = corpus.n_labels
    mat = np.zeros((n, n), dtype=int)
    for t in transcripts:
        mat[corpus.label_index[t.target], corpus.label_index[t.prediction]] += 1
    return mat


def write_confusion_csv(mat: np.ndarray, corpus: Corpus, path: str | Path) -> None:
    ids = [lab.id for lab in corpus.labels]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target"] + ids)
        for i, row in enumerate(mat):
            writer.writerow([ids[i]] + [int(x) for x in row])


def write_report_json(reports: list[EvalReport], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([r.as_dict() for r in reports], indent=2, sort_keys=True), encoding="utf-8"
    )


def write_report_csv(reports: list[EvalReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "acc1_mean", "acc1_std", "acc3_mean", "acc3_std", "mean_turns"])
        for r in reports:
            writer.writerow(
                [r.strategy, r.acc1_mean, r.acc1_std, r.acc3_mean, r.acc3_std, r.mean_turns]
            )


def write_curve_csv(points: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "config", "mean_turns", "acc1", "acc3"])
        for p in points:
            writer.writerow([p["strategy"], p["config"], p["mean_turns"], p["acc1"], p["acc3"]])
