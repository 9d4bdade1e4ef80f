"""STOP/ASK controller and its REINFORCE training loop.

The controller is a two-layer network over (top-k belief probabilities,
normalized turn index). Training rolls out episodes against the user
simulator, updates the network from per-step returns minus a moving
baseline, and nudges the response model's scalars (w, b) by central finite
differences through replayed belief trajectories. Encoder embeddings are
never touched here.
"""

from __future__ import annotations

import csv
import json
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
from .dataset import Corpus, DataError
from .encoder import EncoderModel, prior
from .selection import select_question
from .simulator import Simulator, sample_query, sample_response, sample_target

STOP, ASK = 0, 1


@dataclass
class PolicyModel:
    W1: np.ndarray  # hidden x (k+1)
    b1: np.ndarray
    W2: np.ndarray  # 2 x hidden
    b2: np.ndarray
    k: int = 20
    max_turns: int = 10

    def __post_init__(self):
        if self.k < 1 or self.max_turns < 1:
            raise ValueError("k and max_turns must be >= 1")
        for arr in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("policy parameters must be finite")


@dataclass
class RewardConfig:
    correct: float = 20.0
    wrong: float = -10.0
    turn_penalty: float = -0.5

    def __post_init__(self):
        if self.turn_penalty > 0:
            raise ValueError("turn_penalty must be <= 0")


@dataclass
class Step:
    topk: np.ndarray  # k probabilities, padded
    turn: int
    action: int
    logprob: float | None  # None when the STOP was forced, not sampled


@dataclass
class Trajectory:
    steps: list[Step]
    target: str
    prediction: str
    correct: bool
    query: str
    qa: list[tuple[str, str]]
    prior: np.ndarray

    @property
    def turns(self) -> int:
        return len(self.qa)


@dataclass
class PolicyTrainConfig:
    episodes: int = 6000
    batch_episodes: int = 100  # trials per gradient update (frozen parameters within)
    report_every: int = 400  # trials per log row and per w,b update
    learning_rate: float = 0.05
    wb_learning_rate: float = 0.01
    fd_epsilon: float = 1e-3
    baseline_decay: float = 0.95
    update_wb: bool = True
    k: int = 20
    max_turns: int = 10
    hidden: int = 32
    seed: int = 0
    jobs: int = 1
    uniform_prior: bool = False

    def __post_init__(self):
        if self.episodes < 0 or self.report_every < 1 or self.batch_episodes < 1 or self.jobs < 1:
            raise ValueError("bad training configuration")


def init_policy(k: int = 20, max_turns: int = 10, hidden: int = 32, seed: int = 0) -> PolicyModel:
    rng = np.random.default_rng(seed)
    return PolicyModel(
        W1=rng.normal(0.0, 0.1, size=(hidden, k + 1)),
        b1=np.zeros(hidden),
        W2=rng.normal(0.0, 0.1, size=(2, hidden)),
        b2=np.zeros(2),
        k=k,
        max_turns=max_turns,
    )


def _features(policy: PolicyModel, topk_probs: np.ndarray, turn: int) -> np.ndarray:
    x = np.zeros(policy.k + 1)
    x[: len(topk_probs)] = topk_probs
    x[-1] = turn / policy.max_turns
    return x


def _forward(policy: PolicyModel, x: np.ndarray):
    z1 = policy.W1 @ x + policy.b1
    h = np.maximum(z1, 0.0)
    z2 = policy.W2 @ h + policy.b2
    z2 = z2 - z2.max()
    exp = np.exp(z2)
    return exp / exp.sum(), h, z1


def policy_forward(policy: PolicyModel, topk_probs, turn: int) -> tuple[float, float]:
    """(p_stop, p_ask) for the given observation."""
    probs, _, _ = _forward(policy, _features(policy, np.asarray(topk_probs, dtype=float), turn))
    return float(probs[STOP]), float(probs[ASK])


def decide(
    policy: PolicyModel,
    topk_probs,
    turn: int,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
) -> int:
    """STOP or ASK. Greedy breaks the exact tie toward STOP."""
    p_stop, p_ask = policy_forward(policy, topk_probs, turn)
    if mode == "greedy":
        return STOP if p_stop >= p_ask else ASK
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        return int(rng.choice(2, p=[p_stop, p_ask]))
    raise ValueError(f"unknown decision mode {mode!r}")


def _logprob_grad(policy: PolicyModel, x: np.ndarray, action: int):
    """log pi(action | x) and its gradient w.r.t. W1, b1, W2, b2."""
    probs, h, z1 = _forward(policy, x)
    dz2 = -probs.copy()
    dz2[action] += 1.0
    gW2 = np.outer(dz2, h)
    dh = policy.W2.T @ dz2
    dz1 = dh * (z1 > 0.0)
    gW1 = np.outer(dz1, x)
    return float(np.log(probs[action])), gW1, dz1, gW2, dz2


def compute_returns(traj: Trajectory, cfg: RewardConfig) -> np.ndarray:
    """Undiscounted suffix-sum returns G_t over the trajectory's steps."""
    rewards = np.empty(len(traj.steps))
    for i, step in enumerate(traj.steps):
        if step.action == ASK:
            rewards[i] = cfg.turn_penalty
        else:
            rewards[i] = cfg.correct if traj.correct else cfg.wrong
    return np.cumsum(rewards[::-1])[::-1].copy()


def run_episode(
    corpus: Corpus,
    encoder: EncoderModel | None,
    rm: ResponseModel,
    policy: PolicyModel,
    sim: Simulator,
    rng: np.random.Generator,
    mode: str = "sample",
    uniform_prior: bool = False,
) -> Trajectory:
    """One simulated dialogue under the current policy.

    The STOP at bank exhaustion or at max_turns is forced (logprob None) and
    carries no gradient.
    """
    target = sample_target(sim, rng)
    query = sample_query(sim, target, rng)
    if uniform_prior or encoder is None:
        p0 = np.full(corpus.n_labels, 1.0 / corpus.n_labels)
    else:
        p0 = prior(encoder, query, corpus.labels)
    state = init_belief(p0)
    steps: list[Step] = []
    qa: list[tuple[str, str]] = []
    turn = 0
    while True:
        tk = np.array([p for _, p in top_k(state, corpus, policy.k)])
        nxt = select_question(state, corpus, rm)
        if turn >= policy.max_turns or nxt is None:
            steps.append(Step(tk, turn, STOP, None))
            break
        x = _features(policy, tk, turn)
        probs, _, _ = _forward(policy, x)
        if mode == "greedy":
            action = STOP if probs[STOP] >= probs[ASK] else ASK
        else:
            action = int(rng.choice(2, p=probs))
        steps.append(Step(tk, turn, action, float(np.log(probs[action]))))
        if action == STOP:
            break
        response = sample_response(sim, nxt, target, rng)
        state = update_belief(state, nxt, response, rm)
        qa.append((nxt.id, response))
        turn += 1
    pred = predict(state, corpus)
    return Trajectory(
        steps=steps,
        target=target,
        prediction=pred,
        correct=pred == target,
        query=query,
        qa=qa,
        prior=p0,
    )


def _replay_surrogate(
    batch: list[tuple[Trajectory, np.ndarray]],
    policy: PolicyModel,
    corpus: Corpus,
    rm: ResponseModel,
) -> float:
    """F = sum of advantage-weighted log-probs with beliefs replayed under rm.

    The question/answer sequence and the actions stay fixed; only the belief
    features move with the response model's scalars.
    """
    total = 0.0
    for traj, adv in batch:
        state = init_belief(traj.prior)
        qa_idx = 0
        for i, step in enumerate(traj.steps):
            if step.logprob is not None:
                tk = np.array([p for _, p in top_k(state, corpus, policy.k)])
                x = _features(policy, tk, step.turn)
                probs, _, _ = _forward(policy, x)
                total += float(adv[i]) * float(np.log(probs[step.action]))
            if step.action == ASK:
                qid, response = traj.qa[qa_idx]
                state = update_belief(state, corpus.question(qid), response, rm)
                qa_idx += 1
    return total


def train_policy(
    corpus: Corpus,
    encoder: EncoderModel | None,
    rm: ResponseModel,
    sim: Simulator,
    reward_cfg: RewardConfig,
    config: PolicyTrainConfig,
) -> tuple[PolicyModel, float, float, list[dict]]:
    """REINFORCE over simulated episodes; returns (policy, w, b, log rows).

    Episodes are sampled under frozen parameters in batches of
    `batch_episodes`; each batch applies one mean (G_t - baseline) *
    grad log pi step. Per report window: one central finite-difference step
    on w (and b) through replayed trajectories, then the response tables are
    rebuilt. Log rows aggregate each window.
    """
    for lid in sim.label_ids:
        if lid not in corpus.label_index:
            raise DataError(f"simulator label {lid!r} not in corpus")
    policy = init_policy(config.k, config.max_turns, config.hidden, config.seed)
    master = np.random.SeedSequence(config.seed)
    streams = [np.random.default_rng(s) for s in master.spawn(config.episodes)]
    # seeded from the first return so early advantages are not all-negative
    baseline: float | None = None
    cur_rm = rm
    warm_tables(cur_rm, corpus)
    can_tune_wb = config.update_wb and rm.encoder is not None and rm.lam < 1.0
    w = rm.encoder.w if rm.encoder is not None else 1.0
    b = rm.encoder.b if rm.encoder is not None else 0.0
    window: list[tuple[Trajectory, np.ndarray]] = []
    batch: list[tuple[Trajectory, np.ndarray]] = []
    rows: list[dict] = []
    for ep in range(config.episodes):
        traj = run_episode(
            corpus, encoder, cur_rm, policy, sim, streams[ep],
            mode="sample", uniform_prior=config.uniform_prior,
        )
        returns = compute_returns(traj, reward_cfg)
        if baseline is None:
            baseline = float(returns[0])
        adv = returns - baseline
        baseline = config.baseline_decay * baseline + (1 - config.baseline_decay) * returns[0]
        batch.append((traj, adv))
        window.append((traj, adv))
        if len(batch) == config.batch_episodes or ep == config.episodes - 1:
            if config.learning_rate != 0.0:
                gW1 = np.zeros_like(policy.W1)
                gb1 = np.zeros_like(policy.b1)
                gW2 = np.zeros_like(policy.W2)
                gb2 = np.zeros_like(policy.b2)
                for t, t_adv in batch:
                    for i, step in enumerate(t.steps):
                        if step.logprob is None:
                            continue
                        x = _features(policy, step.topk, step.turn)
                        _, sW1, sb1, sW2, sb2 = _logprob_grad(policy, x, step.action)
                        gW1 += t_adv[i] * sW1
                        gb1 += t_adv[i] * sb1
                        gW2 += t_adv[i] * sW2
                        gb2 += t_adv[i] * sb2
                scale = config.learning_rate / len(batch)
                policy.W1 += scale * gW1
                policy.b1 += scale * gb1
                policy.W2 += scale * gW2
                policy.b2 += scale * gb2
            batch = []
        if len(window) == config.report_every or ep == config.episodes - 1:
            rows.append(
                {
                    "episode": ep + 1,
                    "mean_return": float(np.mean([compute_returns(t, reward_cfg)[0] for t, _ in window])),
                    "mean_turns": float(np.mean([t.turns for t, _ in window])),
                    "accuracy": float(np.mean([t.correct for t, _ in window])),
                }
            )
            if can_tune_wb and config.wb_learning_rate != 0.0:
                eps = config.fd_epsilon
                f_plus = _replay_surrogate(window, policy, corpus, cur_rm.with_wb(w + eps, b))
                f_minus = _replay_surrogate(window, policy, corpus, cur_rm.with_wb(w - eps, b))
                gw = (f_plus - f_minus) / (2 * eps)
                f_plus = _replay_surrogate(window, policy, corpus, cur_rm.with_wb(w, b + eps))
                f_minus = _replay_surrogate(window, policy, corpus, cur_rm.with_wb(w, b - eps))
                gb = (f_plus - f_minus) / (2 * eps)
                w += config.wb_learning_rate * gw / len(window)
                b += config.wb_learning_rate * gb / len(window)
                cur_rm = rm.with_wb(w, b)
                warm_tables(cur_rm, corpus)
            window = []
    return policy, w, b, rows


def write_training_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["episode", "mean_return", "mean_turns", "accuracy"])
        writer.writeheader()
        writer.writerows(rows)


def save_policy(policy: PolicyModel, path: str | Path, w: float = 1.0, b: float = 0.0) -> None:
    payload = {
        "version": 1,
        "W1": policy.W1.tolist(),
        "b1": policy.b1.tolist(),
        "W2": policy.W2.tolist(),
        "b2": policy.b2.tolist(),
        "k": policy.k,
        "max_turns": policy.max_turns,
        "w": w,
        "b": b,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_policy(path: str | Path) -> tuple[PolicyModel, float, float]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing policy checkpoint: {p}")
    payload = json.loads(p.read_text(encoding="utf-8"))
    if payload.get("version") != 1:
        raise DataError(f"unsupported policy checkpoint version: {payload.get('version')!r}")
    try:
        policy = PolicyModel(
            W1=np.array(payload["W1"], dtype=float),
            b1=np.array(payload["b1"], dtype=float),
            W2=np.array(payload["W2"], dtype=float),
            b2=np.array(payload["b2"], dtype=float),
            k=int(payload["k"]),
            max_turns=int(payload["max_turns"]),
        )
    except KeyError as exc:
        raise DataError(f"policy checkpoint missing field: {exc}") from exc
    return policy, float(payload.get("w", 1.0)), float(payload.get("b", 0.0))
