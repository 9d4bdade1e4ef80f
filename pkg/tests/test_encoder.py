"""Encoder: pooling, scoring, the pair loss and its gradient, training."""

import numpy as np
import pytest

from clarq.dataset import DataError, Label, synth_corpus
from clarq.encoder import (
    OOV_TOKEN,
    EncoderModel,
    TrainConfig,
    build_vocab,
    dataset_loss,
    encode,
    grad_check,
    init_model,
    load_encoder,
    loss_and_grad,
    make_pairs,
    prior,
    qr_text,
    save_encoder,
    score,
    tokenize,
    train_encoder,
)


def hand_model():
    vocab = {OOV_TOKEN: 0, "red": 1, "fast": 2, "bird": 3}
    emb = np.array(
        [
            [0.0, 0.0],
            [1.0, 2.0],
            [3.0, -1.0],
            [0.5, 0.5],
        ]
    )
    return EncoderModel(vocab=vocab, embeddings=emb)


def test_tokenize():
    assert tokenize("Red-Fast bird!") == ["red", "fast", "bird"]
    assert tokenize("") == []
    assert tokenize("a1 b2") == ["a1", "b2"]


def test_encode_mean_pools():
    model = hand_model()
    np.testing.assert_allclose(encode(model, "red fast"), [2.0, 0.5])
    np.testing.assert_allclose(encode(model, "zzz"), [0.0, 0.0])  # OOV row
    np.testing.assert_allclose(encode(model, ""), [0.0, 0.0])


def test_score_is_dot_product():
    model = hand_model()
    expected = float(np.dot([2.0, 0.5], [0.5, 0.5]))
    assert score(model, "red fast", "bird") == pytest.approx(expected, abs=1e-12)


def test_prior_matches_manual_softmax():
    model = hand_model()
    labels = [Label("a", "red"), Label("b", "fast"), Label("c", "bird")]
    q = encode(model, "red bird")
    scores = np.array([encode(model, lab.text) @ q for lab in labels])
    manual = np.exp(scores - scores.max())
    manual /= manual.sum()
    np.testing.assert_allclose(prior(model, "red bird", labels), manual, atol=1e-12)
    assert prior(model, "red bird", labels).sum() == pytest.approx(1.0, abs=1e-12)


def test_prior_empty_catalog_raises():
    with pytest.raises(ValueError, match="empty label catalog"):
        prior(hand_model(), "x", [])


def test_prior_uniform_for_empty_query():
    model = hand_model()
    labels = [Label("a", "red"), Label("b", "fast")]
    np.testing.assert_allclose(prior(model, "", labels), [0.5, 0.5], atol=1e-12)


def test_qr_text():
    assert qr_text("wing color", "red") == "wing color red"


# -- training pairs ----------------------------------------------------------


def test_make_pairs_uses_train_split_only():
    corpus = synth_corpus(10, 4, 0.0, seed=1)
    cfg = TrainConfig(augmentation_rate=0.0)
    pairs = make_pairs(corpus, cfg)
    train_texts = {corpus.label(i).text for i in corpus.split.train}
    assert pairs
    assert {v for _, v in pairs} <= train_texts


def test_make_pairs_counts_without_augmentation():
    corpus = synth_corpus(8, 3, 0.0, seed=1, n_records=2, n_queries=2)
    pairs = make_pairs(corpus, TrainConfig(augmentation_rate=0.0))
    n_train_records = sum(1 for r in corpus.records if r.label_id in set(corpus.split.train))
    # per record: n_queries query pairs + one pair per answered question
    assert len(pairs) == n_train_records * (2 + 3)


def test_make_pairs_augmentation_adds_and_is_seeded():
    corpus = synth_corpus(8, 3, 0.0, seed=1)
    base = make_pairs(corpus, TrainConfig(augmentation_rate=0.0))
    aug1 = make_pairs(corpus, TrainConfig(augmentation_rate=1.0, seed=3))
    aug2 = make_pairs(corpus, TrainConfig(augmentation_rate=1.0, seed=3))
    assert len(aug1) > len(base)
    assert aug1 == aug2


def test_build_vocab_covers_all_texts():
    corpus = synth_corpus(6, 3, 0.0, seed=0)
    pairs = make_pairs(corpus, TrainConfig(augmentation_rate=0.0))
    vocab = build_vocab(corpus, pairs)
    assert OOV_TOKEN in vocab
    for u, v in pairs:
        for tok in tokenize(u) + tokenize(v):
            assert tok in vocab
    assert len(set(vocab.values())) == len(vocab)  # ids are distinct


# -- loss oracle -------------------------------------------------------------


def manual_loss(model, pairs, extra=None):
    """Cross-entropy re-derived with scalar ops only."""
    cands = []
    for _, v in pairs:
        if v not in cands:
            cands.append(v)
    for v in extra or []:
        if v not in cands:
            cands.append(v)
    total = 0.0
    for u, v in pairs:
        scores = [float(encode(model, u) @ encode(model, c)) for c in cands]
        m = max(scores)
        logz = m + np.log(sum(np.exp(s - m) for s in scores))
        total += -(scores[cands.index(v)] - logz)
    return total / len(pairs)


def test_loss_matches_manual():
    rng = np.random.default_rng(0)
    vocab = {OOV_TOKEN: 0, "a": 1, "b": 2, "c": 3, "d": 4}
    model = EncoderModel(vocab=vocab, embeddings=rng.normal(size=(5, 3)))
    pairs = [("a b", "c"), ("b", "d"), ("a", "c")]
    loss, _ = loss_and_grad(model, pairs, ["a d"])
    assert loss == pytest.approx(manual_loss(model, pairs, ["a d"]), abs=1e-12)


def test_loss_empty_pairs_raises():
    with pytest.raises(ValueError, match="empty pair list"):
        loss_and_grad(hand_model(), [])


def test_grad_check_small():
    rng = np.random.default_rng(1)
    vocab = {OOV_TOKEN: 0, "a": 1, "b": 2, "c": 3, "d": 4, "e": 5}
    model = EncoderModel(vocab=vocab, embeddings=rng.normal(scale=0.5, size=(6, 4)))
    pairs = [("a b", "c d"), ("b e", "a"), ("d", "c d")]
    assert grad_check(model, pairs, n_coords=30, seed=0) < 1e-5


def test_dataset_loss_averages_batches():
    rng = np.random.default_rng(2)
    vocab = {OOV_TOKEN: 0, "a": 1, "b": 2, "c": 3}
    model = EncoderModel(vocab=vocab, embeddings=rng.normal(size=(4, 3)))
    pairs = [("a", "b"), ("b", "c"), ("c", "a"), ("a b", "c")]
    whole = dataset_loss(model, pairs, batch_size=4)
    assert whole == pytest.approx(manual_loss(model, pairs), abs=1e-12)


# -- training ----------------------------------------------------------------


def test_training_reduces_loss_and_keeps_wb_frozen():
    corpus = synth_corpus(8, 3, 0.0, seed=7)
    cfg = TrainConfig(epochs=6, d=16, seed=0, augmentation_rate=0.0)
    pairs = make_pairs(corpus, cfg)
    before_model = init_model(build_vocab(corpus, pairs), cfg.d, cfg.seed)
    before = dataset_loss(before_model, pairs, cfg.batch_size)
    model = train_encoder(corpus, cfg)
    after = dataset_loss(model, pairs, cfg.batch_size)
    assert after < before
    assert model.w == 1.0 and model.b == 0.0


def test_training_without_annotations_raises():
    corpus = synth_corpus(4, 2, 0.0, seed=0)
    corpus.records.clear()
    with pytest.raises(DataError, match="no training pairs"):
        train_encoder(corpus, TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(augmentation_rate=1.5)


# -- checkpoints -------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    model = hand_model()
    model.w, model.b = 1.25, -0.5
    path = tmp_path / "enc.json"
    save_encoder(model, path)
    loaded = load_encoder(path)
    assert loaded.vocab == model.vocab
    np.testing.assert_allclose(loaded.embeddings, model.embeddings)
    assert loaded.w == 1.25 and loaded.b == -0.5


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "enc.json"
    save_encoder(hand_model(), path)
    raw = path.read_text().replace('"version": 1', '"version": 99')
    path.write_text(raw)
    with pytest.raises(DataError, match="version"):
        load_encoder(path)


def test_checkpoint_missing(tmp_path):
    with pytest.raises(DataError, match="missing encoder checkpoint"):
        load_encoder(tmp_path / "nope.json")
