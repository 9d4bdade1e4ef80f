"""Shared fixtures and small world builders for the test suite."""

import numpy as np
import pytest

from clarq.belief import ResponseModel
from clarq.dataset import Corpus, Label, Question, Split, synth_corpus
from clarq.encoder import TrainConfig, train_encoder
from clarq.evaluation import Engine
from clarq.policy import PolicyTrainConfig, RewardConfig, train_policy
from clarq.simulator import fit_simulator


def make_corpus(n_labels, answer_counts, records=(), groups=None):
    """Hand-built corpus: generic labels, one multichoice question per entry
    of `answer_counts`, everything in the train split."""
    labels = [Label(id=f"l{i:02d}", text=f"thing {i}") for i in range(n_labels)]
    groups = groups or {}
    questions = [
        Question(
            id=f"q{j}",
            text=f"What is your attr{j}?",
            kind="multichoice",
            answers=[f"a{j}_{r}" for r in range(m)],
            group=groups.get(j),
        )
        for j, m in enumerate(answer_counts)
    ]
    split = Split(train=[lab.id for lab in labels], dev=[], test=[])
    return Corpus(labels=labels, questions=questions, records=list(records), split=split)


def rm_from_probs(corpus, tables):
    """Response model whose likelihood tables equal the given probability
    rows exactly: float counts proportional to probabilities, lambda=1,
    alpha=0. `tables` maps question id -> N x |R(q)| array."""
    counts = {}
    for q in corpus.questions:
        table = np.asarray(tables[q.id], dtype=float)
        for i, lab in enumerate(corpus.labels):
            counts[(lab.id, q.id)] = {a: float(table[i, j]) for j, a in enumerate(q.answers)}
    return ResponseModel(corpus, None, lam=1.0, alpha=0.0, counts=counts)


def random_tables(corpus, rng, zero_rate=0.15):
    """Random proper response tables, with some exact-zero entries to
    exercise the likelihood floor and zero-marginal branches."""
    tables = {}
    for q in corpus.questions:
        t = rng.dirichlet(np.ones(len(q.answers)), size=corpus.n_labels)
        if zero_rate > 0:
            mask = rng.random(t.shape) < zero_rate
            t = np.where(mask, 0.0, t)
        dead = t.sum(axis=1) == 0
        t[dead] = 1.0
        t = t / t.sum(axis=1, keepdims=True)
        tables[q.id] = t
    return tables


def random_belief(n, rng):
    return rng.dirichlet(np.ones(n))


@pytest.fixture(scope="session")
def noise_world():
    """16 labels x 4 attributes with mild flip noise; shared read-only."""
    return synth_corpus(16, 4, 0.05, seed=2, n_records=4, query_mentions=(2, 2))


@pytest.fixture(scope="session")
def noise_encoder(noise_world):
    return train_encoder(noise_world, TrainConfig(epochs=8, d=32, seed=0))


@pytest.fixture(scope="session")
def noise_rm(noise_world, noise_encoder):
    return ResponseModel(noise_world, noise_encoder, lam=0.5, alpha=0.1)


@pytest.fixture(scope="session")
def noise_sim(noise_world):
    held = list(noise_world.split.dev) + list(noise_world.split.test)
    return fit_simulator(noise_world, held, alpha=1.0,
                         encoder_train_labels=noise_world.split.train)


@pytest.fixture(scope="session")
def noise_engine(noise_world, noise_encoder, noise_rm):
    return Engine(noise_world, noise_encoder, noise_rm)


@pytest.fixture(scope="session")
def noise_policy(noise_world, noise_encoder, noise_rm, noise_sim):
    cfg = PolicyTrainConfig(episodes=300, batch_episodes=50, report_every=100,
                            learning_rate=0.1, update_wb=False, k=8, max_turns=4,
                            hidden=8, seed=0)
    policy, _, _, _ = train_policy(noise_world, noise_encoder, noise_rm, noise_sim,
                                   RewardConfig(), cfg)
    return policy
