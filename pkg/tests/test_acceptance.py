"""Acceptance gate.

Each test exercises one headline requirement end to end at its stated
tolerance and prints a single PASS line on success (visible with -s; under
plain pytest the test name serves the same purpose). Heavy world fixtures
are module scoped so the trained pipelines are built once.
"""

import json
import time
from datetime import datetime, timezone

import numpy as np
import pytest
from conftest import make_corpus, random_belief, random_tables, rm_from_probs
from fastapi.testclient import TestClient

from clarq.belief import PROB_FLOOR, ResponseModel, init_belief, likelihood_table, update_belief
from clarq.dataset import NOT_VISIBLE, synth_corpus
from clarq.encoder import (
    TrainConfig,
    build_vocab,
    grad_check,
    init_model,
    make_pairs,
    train_encoder,
)
from clarq.evaluation import (
    Engine,
    FixedStop,
    SimResponder,
    SuiteConfig,
    ThresholdStop,
    evaluate_suite,
    mean_turns,
    replay,
    run_interaction,
    run_strategy,
)
from clarq.policy import PolicyTrainConfig, RewardConfig, train_policy
from clarq.selection import conditional_entropy, entropy, information_gain
from clarq.service import create_app
from clarq.simulator import fit_simulator


def ok(line: str) -> None:
    print(f"PASS: {line}")


# --- shared heavy fixtures ---------------------------------------------------


@pytest.fixture(scope="module")
def table1_reports():
    """Noisy 100-label world: encoder, policy, and the full strategy suite.

    Built once; the ordering, one-question-lift, and zero-shot tests all read
    from the same paired-episode evaluation. Returns (reports, elapsed).
    """
    t0 = time.perf_counter()
    corpus = synth_corpus(100, 10, 0.15, seed=1, n_records=8, query_mentions=(2, 2))
    enc = train_encoder(corpus, TrainConfig(epochs=60, seed=0))
    rm = ResponseModel(corpus, enc, lam=0.5, alpha=0.1)
    sim_dev = fit_simulator(corpus, corpus.split.dev, alpha=1.0,
                            encoder_train_labels=corpus.split.train)
    cfg = PolicyTrainConfig(episodes=6000, batch_episodes=100, report_every=400,
                            learning_rate=0.05, wb_learning_rate=0.05, seed=0)
    policy, w, b, _ = train_policy(corpus, enc, rm, sim_dev, RewardConfig(), cfg)
    engine = Engine(corpus, enc, rm.with_wb(w, b), policy)
    sim_test = fit_simulator(corpus, corpus.split.test, alpha=1.0,
                             encoder_train_labels=corpus.split.train)
    suite = SuiteConfig(
        strategies=["full", "no_initial_query", "random:5", "no_interaction",
                    "fixed:1", "zero_shot"],
        episodes=500, seeds=[0, 1, 2],
    )
    reports = {r.strategy: r for r in evaluate_suite(engine, sim_test, suite)}
    return reports, time.perf_counter() - t0


@pytest.fixture(scope="module")
def penalty_world():
    corpus = synth_corpus(60, 8, 0.05, seed=3, n_records=10, query_mentions=(2, 2))
    enc = train_encoder(corpus, TrainConfig(epochs=40, seed=0))
    rm = ResponseModel(corpus, enc, lam=0.5, alpha=0.1)
    sim = fit_simulator(corpus, corpus.split.dev, alpha=1.0,
                        encoder_train_labels=corpus.split.train)
    return corpus, enc, rm, sim


# --- exact property suites ---------------------------------------------------


def test_information_gain_matches_brute_force_oracle():
    """IG and conditional entropy vs a full-joint brute force, 200 instances."""

    def brute(belief, table):
        n, k = table.shape
        joint = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                joint[i, j] = belief[i] * table[i, j]
        marg = joint.sum(axis=0)
        cond = 0.0
        for j in range(k):
            if marg[j] <= 0.0:
                continue
            post = joint[:, j] / marg[j]
            h = 0.0
            for p in post:
                if p > 0.0:
                    h -= p * np.log(p)
            cond += marg[j] * h
        h0 = 0.0
        for p in belief:
            if p > 0.0:
                h0 -= p * np.log(p)
        return cond, h0 - cond

    rng = np.random.default_rng(42)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 21))
        k = int(rng.integers(2, 5))
        corpus = make_corpus(n, (k,))
        rm = rm_from_probs(corpus, random_tables(corpus, rng))
        state = init_belief(random_belief(n, rng))
        q = corpus.questions[0]
        cond_ref, ig_ref = brute(state.probs(), likelihood_table(rm, q))
        worst = max(worst,
                    abs(conditional_entropy(state, q, rm) - cond_ref),
                    abs(information_gain(state, q, rm) - ig_ref))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-9
    assert elapsed < 5.0
    ok(f"IG/conditional entropy match brute force on 200 instances "
       f"(max err {worst:.2e}, {elapsed:.2f}s)")


def test_incremental_equals_batch_posterior():
    """Composed single-question updates vs the product-form posterior."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 13))
        n_q = int(rng.integers(3, 6))
        counts = tuple(int(rng.integers(2, 5)) for _ in range(n_q))
        corpus = make_corpus(n, counts)
        rm = rm_from_probs(corpus, random_tables(corpus, rng))
        prior = random_belief(n, rng)
        length = int(rng.integers(1, 6))
        qs = rng.permutation(n_q)[:length]
        state = init_belief(prior)
        product = prior.copy()
        for qi in qs:
            q = corpus.questions[qi]
            r = q.answers[int(rng.integers(len(q.answers)))]
            state = update_belief(state, q, r, rm)
            col = likelihood_table(rm, q)[:, q.answers.index(r)]
            product = product * np.maximum(col, PROB_FLOOR)
        product /= product.sum()
        worst = max(worst, float(np.abs(state.probs() - product).max()))
    assert worst < 1e-12
    ok(f"incremental updates equal batch posterior on 200 histories "
       f"(max err {worst:.2e})")


def test_encoder_gradient_check():
    """Analytic gradient vs central differences on 20 random configurations."""
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(100 + i)
        corpus = synth_corpus(
            int(rng.integers(4, 11)), int(rng.integers(2, 4)) + 2,
            float(rng.uniform(0.0, 0.3)), seed=int(rng.integers(1000)),
        )
        cfg = TrainConfig(d=int(rng.choice([8, 16, 32])), seed=i)
        pairs = make_pairs(corpus, cfg)
        model = init_model(build_vocab(corpus, pairs), cfg.d, seed=i)
        err = grad_check(model, pairs[: min(len(pairs), 24)],
                         n_coords=20, seed=i)
        worst = max(worst, err)
        assert err < 1e-4, f"configuration {i}: relative error {err:.3e}"
    ok(f"encoder gradient check < 1e-4 on 20 configurations (worst {worst:.2e})")


def test_belief_normalization_fuzz():
    """10k random update sequences keep the belief a clean distribution."""
    rng = np.random.default_rng(99)
    sequences = 0
    for world in range(40):
        n = int(rng.integers(2, 13))
        n_q = int(rng.integers(2, 6))
        counts = tuple(int(rng.integers(2, 5)) for _ in range(n_q))
        groups = {0: "head"} if world % 2 == 0 else None
        corpus = make_corpus(n, counts, groups=groups)
        rm = rm_from_probs(corpus, random_tables(corpus, rng, zero_rate=0.25))
        for _ in range(250):
            state = init_belief(random_belief(n, rng))
            order = rng.permutation(n_q)[: int(rng.integers(1, n_q + 1))]
            for qi in order:
                q = corpus.questions[qi]
                options = list(q.answers)
                if q.group is not None and rng.random() < 0.2:
                    r = NOT_VISIBLE
                else:
                    r = options[int(rng.integers(len(options)))]
                if not q.accepts(r):
                    continue
                state = update_belief(state, q, r, rm)
                probs = state.probs()
                assert not np.any(np.isnan(probs))
                assert abs(probs.sum() - 1.0) < 1e-9
            sequences += 1
    assert sequences == 10_000
    ok("belief sums stayed within 1e-9 of 1 (no NaN) over 10k update sequences")


# --- twenty questions --------------------------------------------------------


def test_twenty_questions_optimality():
    """64 noise-free binary attributes: IG needs exactly 6 turns, random more."""
    t0 = time.perf_counter()
    corpus = synth_corpus(64, 6, 0.0, seed=7)
    rm = ResponseModel(corpus, None, lam=1.0, alpha=0.1)
    engine = Engine(corpus, None, rm)
    sim = fit_simulator(corpus, [lab.id for lab in corpus.labels],
                        alpha=0.0, encoder_train_labels=())
    targets = [lab.id for lab in corpus.labels]

    def accuracy_at_fixed(turns, selector, rng_seed):
        streams = np.random.SeedSequence(rng_seed).spawn(len(targets))
        hits, turn_counts = 0, []
        for target, ss in zip(targets, streams):
            t = run_interaction(
                engine, SimResponder(sim, target, ""), FixedStop(turns),
                np.random.default_rng(ss), selector=selector, uniform_prior=True,
            )
            hits += t.prediction == target
            turn_counts.append(t.n_turns)
        return hits / len(targets), turn_counts

    acc6, turns6 = accuracy_at_fixed(6, "ig", 0)
    assert acc6 == 1.0
    assert set(turns6) == {6}
    acc5, _ = accuracy_at_fixed(5, "ig", 0)
    assert acc5 < 1.0  # 6 turns is minimal, not just sufficient

    min_ts = []
    for seed in (0, 1, 2):
        for t in range(6, 65):
            acc, _ = accuracy_at_fixed(t, "random", seed)
            if acc == 1.0:
                min_ts.append(t)
                break
        else:
            min_ts.append(65)
    mean_t = sum(min_ts) / len(min_ts)
    assert mean_t > 6.0
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    ok(f"IG identifies all 64 targets in exactly 6 turns; random needs "
       f"{mean_t:.1f} on average (seeds {min_ts}, {elapsed:.1f}s)")


# --- scaled quantitative reproductions ---------------------------------------


def test_strategy_ordering_and_relative_gain(table1_reports):
    reports, elapsed = table1_reports
    assert elapsed < 600.0
    chain = ["full", "no_initial_query", "random:5", "no_interaction"]
    accs = {s: reports[s].acc1_mean for s in chain}
    stds = {s: reports[s].acc1_std for s in chain}
    for hi, lo in zip(chain, chain[1:]):
        gap = accs[hi] - accs[lo]
        spread = max(stds[hi], stds[lo])
        assert gap > spread, f"{hi} vs {lo}: gap {gap:.3f} <= std {spread:.3f}"
    rel = (accs["full"] - accs["no_interaction"]) / accs["no_interaction"]
    assert rel >= 0.5
    ok("Acc@1 ordering full {:.3f} > no_initial_query {:.3f} > random:5 {:.3f} "
       "> no_interaction {:.3f}, every gap > 1 stddev; relative gain {:.0%} "
       "(pipeline {:.0f}s)".format(*(accs[s] for s in chain), rel, elapsed))


def test_one_question_lift(table1_reports):
    reports, _ = table1_reports
    one = reports["fixed:1"].acc1_mean
    none = reports["no_interaction"].acc1_mean
    rel = (one - none) / none
    assert rel >= 0.15
    ok(f"a single question lifts Acc@1 {none:.3f} -> {one:.3f} (+{rel:.0%})")


def test_zero_shot_degradation_bound(table1_reports):
    reports, _ = table1_reports
    drop = reports["full"].acc1_mean - reports["zero_shot"].acc1_mean
    assert drop <= 0.10
    ok(f"masking held-out empirical counts costs {drop * 100:.1f} Acc@1 points "
       f"(bound 10)")


def test_turn_penalty_tradeoff(penalty_world):
    corpus, enc, rm, sim = penalty_world
    cfg_base = dict(episodes=4000, batch_episodes=100, report_every=400,
                    learning_rate=0.05, wb_learning_rate=0.05)
    per_seed = {}
    for seed in (0, 1, 2):
        turns = []
        for penalty in (-0.5, -1.0, -3.0):
            cfg = PolicyTrainConfig(seed=seed, **cfg_base)
            policy, w, b, _ = train_policy(
                corpus, enc, rm, sim, RewardConfig(turn_penalty=penalty), cfg)
            engine = Engine(corpus, enc, rm.with_wb(w, b), policy)
            ts = run_strategy("full", engine, sim, seed, 300,
                              SuiteConfig(max_turns=10))
            turns.append(mean_turns(ts))
        assert turns[0] >= turns[1] >= turns[2], f"seed {seed}: {turns}"
        per_seed[seed] = [round(t, 2) for t in turns]
    ok(f"mean turns non-increasing in turn penalty for 3/3 seeds {per_seed}")


# --- service replay fidelity -------------------------------------------------


def test_service_replay_fidelity(noise_engine, tmp_path):
    """100 scripted HTTP sessions replay to identical predictions and top-1s."""
    app = create_app(noise_engine, ThresholdStop(0.8, 4), log_dir=tmp_path, seed=11)
    corpus = noise_engine.corpus
    rng = np.random.default_rng(123)
    queries = [q for rec in corpus.records for q in rec.initial_queries]
    with TestClient(app) as client:
        for i in range(100):
            if i % 2 == 0:
                lid = corpus.labels[int(rng.integers(corpus.n_labels))].id
                created = client.post("/sessions", json={"scenario_id": lid}).json()
                text = created["scenario_text"]
            else:
                created = client.post("/sessions", json={}).json()
                text = queries[int(rng.integers(len(queries)))]
            sid = created["session_id"]
            body = client.post(f"/sessions/{sid}/query", json={"text": text}).json()
            while body["status"] == "awaiting_answer":
                q = body["question"]
                options = list(q["answers"])
                if q["allow_not_visible"]:
                    options.append(NOT_VISIBLE)
                pick = options[int(rng.integers(len(options)))]
                body = client.post(f"/sessions/{sid}/answer",
                                   json={"answer": pick}).json()
            assert body["status"] == "done"

    day = datetime.now(timezone.utc).strftime("%Y%m%d")
    rows = [json.loads(line) for line in
            (tmp_path / f"transcripts-{day}.jsonl").read_text().splitlines()]
    transcripts = [r for r in rows if r["type"] == "transcript"]
    assert len(transcripts) == 100
    for row in transcripts:
        tops, pred = replay(noise_engine, row["query"],
                            [tuple(pair) for pair in row["qa"]])
        assert pred == row["prediction"]
        assert [lid for lid, _ in tops] == [pair[0] for pair in row["turn_top1"]]
        for (_, p_live), (_, p_log) in zip(row["turn_top1"], tops):
            assert abs(p_live - p_log) < 1e-12
    ok("100 scripted HTTP sessions replay to identical predictions and "
       "per-turn top-1 labels")
