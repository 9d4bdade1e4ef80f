"""Shared text encoder: mean-pooled trainable word embeddings.

All text roles (initial queries, tag#answer strings, label descriptions) go
through the same encoder. Scores are plain dot products; the label prior is
a softmax over label scores against the query. Training minimizes a
cross-entropy over in-batch label candidates (negative sampling).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Corpus, DataError, Label

OOV_TOKEN = "<unk>"
CHECKPOINT_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class EncoderModel:
    vocab: dict[str, int]  # includes OOV_TOKEN
    embeddings: np.ndarray  # |V| x d, float64
    w: float = 1.0
    b: float = 0.0

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    def token_ids(self, text: str) -> list[int]:
        oov = self.vocab[OOV_TOKEN]
        return [self.vocab.get(tok, oov) for tok in tokenize(text)]


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 0.3
    negatives_per_batch: int = 8
    augmentation_rate: float = 0.25
    seed: int = 0
    d: int = 64

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0 or self.d < 1:
            raise ValueError("epochs, batch_size and d must be positive; learning_rate non-negative")
        if not 0.0 <= self.augmentation_rate <= 1.0:
            raise ValueError("augmentation_rate must be in [0, 1]")


def encode(model: EncoderModel, text: str) -> np.ndarray:
    """Mean of the token embedding rows; zero vector for empty text."""
    ids = model.token_ids(text)
    if not ids:
        return np.zeros(model.d)
    return model.embeddings[ids].mean(axis=0)


def score(model: EncoderModel, u: str, v: str) -> float:
    """Dot-product score between two pieces of text."""
    return float(encode(model, u) @ encode(model, v))


def prior(model: EncoderModel, query: str, labels: list[Label]) -> np.ndarray:
    """Softmax over label scores against the query, in catalog order."""
    if not labels:
        raise ValueError("empty label catalog")
    q = encode(model, query)
    scores = np.array([encode(model, lab.text) @ q for lab in labels])
    scores -= scores.max()
    exp = np.exp(scores)
    return exp / exp.sum()


def qr_text(tag: str, answer: str) -> str:
    """Concatenation of question tag and answer used for response scoring."""
    return f"{tag} {answer}"


def make_pairs(corpus: Corpus, config: TrainConfig) -> list[tuple[str, str]]:
    """Build (text, label text) training pairs from the train split.

    One pair per initial query plus one per question-answer annotation, with
    optional pseudo-query augmentation that appends a sampled subset of the
    label's tag phrases to an existing query.
    """
    rng = np.random.default_rng(config.seed)
    train_ids = set(corpus.split.train)
    pairs: list[tuple[str, str]] = []
    query_pairs: list[tuple[str, str, str]] = []  # (query, label text, label id)

    for rec in corpus.records:
        if rec.label_id not in train_ids:
            continue
        label_text = corpus.label(rec.label_id).text
        for query in rec.initial_queries:
            pairs.append((query, label_text))
            query_pairs.append((query, label_text, rec.label_id))
        for qid, answer in rec.qa_pairs:
            tag = corpus.question(qid).tag_text()
            pairs.append((qr_text(tag, answer), label_text))

    if config.augmentation_rate > 0:
        for query, label_text, label_id in query_pairs:
            if rng.random() >= config.augmentation_rate:
                continue
            tags = corpus.label_tag_texts(label_id)
            if not tags:
                continue
            n_extra = int(rng.integers(1, len(tags) + 1))
            picked = rng.choice(len(tags), size=n_extra, replace=False)
            extra = " ".join(tags[i] for i in sorted(picked))
            pairs.append((f"{query} {extra}", label_text))
    return pairs


def build_vocab(corpus: Corpus, pairs: list[tuple[str, str]]) -> dict[str, int]:
    vocab = {OOV_TOKEN: 0}
    texts = [lab.text for lab in corpus.labels]
    for u, v in pairs:
        texts.append(u)
        texts.append(v)
    for text in texts:
        for tok in tokenize(text):
            if tok not in vocab:
                vocab[tok] = len(vocab)
    return vocab


def _mean_ids(model: EncoderModel, texts: list[str]) -> tuple[np.ndarray, list[list[int]]]:
    ids = [model.token_ids(t) for t in texts]
    mat = np.zeros((len(texts), model.d))
    for i, row in enumerate(ids):
        if row:
            mat[i] = model.embeddings[row].mean(axis=0)
    return mat, ids


def loss_and_grad(
    model: EncoderModel, pairs: list[tuple[str, str]], extra_candidates: list[str] | None = None
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss over pairs with in-batch label candidates.

    Candidates are the distinct right-hand texts of the batch plus any extra
    negatives. Returns (loss, gradient w.r.t. the embedding matrix).
    """
    if not pairs:
        raise ValueError("empty pair list")
    cands: list[str] = []
    for _, v in pairs:
        if v not in cands:
            cands.append(v)
    for v in extra_candidates or []:
        if v not in cands:
            cands.append(v)
    cand_pos = {v: i for i, v in enumerate(cands)}

    U, u_ids = _mean_ids(model, [u for u, _ in pairs])
    C, c_ids = _mean_ids(model, cands)
    S = U @ C.T  # B x K
    S_shift = S - S.max(axis=1, keepdims=True)
    expS = np.exp(S_shift)
    P = expS / expS.sum(axis=1, keepdims=True)
    targets = np.array([cand_pos[v] for _, v in pairs])

    B = len(pairs)
    loss = float(np.mean(-S[np.arange(B), targets] + np.log(expS.sum(axis=1)) + S.max(axis=1)))

    dS = P.copy()
    dS[np.arange(B), targets] -= 1.0
    dS /= B
    dU = dS @ C
    dC = dS.T @ U

    grad = np.zeros_like(model.embeddings)
    for i, row in enumerate(u_ids):
        if row:
            np.add.at(grad, row, dU[i] / len(row))
    for j, row in enumerate(c_ids):
        if row:
            np.add.at(grad, row, dC[j] / len(row))
    return loss, grad


def dataset_loss(model: EncoderModel, pairs: list[tuple[str, str]], batch_size: int) -> float:
    """Loss over fixed, unshuffled batches; used to track training progress."""
    total, count = 0.0, 0
    for start in range(0, len(pairs), batch_size):
        batch = pairs[start : start + batch_size]
        loss, _ = loss_and_grad(model, batch)
        total += loss * len(batch)
        count += len(batch)
    return total / count


def init_model(vocab: dict[str, int], d: int, seed: int) -> EncoderModel:
    rng = np.random.default_rng(seed)
    embeddings = rng.uniform(-0.1, 0.1, size=(len(vocab), d))
    return EncoderModel(vocab=vocab, embeddings=embeddings, w=1.0, b=0.0)


def train_encoder(corpus: Corpus, config: TrainConfig) -> EncoderModel:
    """Mini-batch gradient descent on the pair loss; w and b stay frozen."""
    pairs = make_pairs(corpus, config)
    if not pairs:
        raise DataError("no training pairs: train split has no annotations")
    vocab = build_vocab(corpus, pairs)
    model = init_model(vocab, config.d, config.seed)
    train_label_texts = [corpus.label(i).text for i in corpus.split.train]

    rng = np.random.default_rng(config.seed + 1)
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(pairs), config.batch_size):
            batch = [pairs[i] for i in order[start : start + config.batch_size]]
            extra = []
            if config.negatives_per_batch > 0 and train_label_texts:
                n = min(config.negatives_per_batch, len(train_label_texts))
                extra = [train_label_texts[i] for i in rng.choice(len(train_label_texts), size=n, replace=False)]
            _, grad = loss_and_grad(model, batch, extra)
            model.embeddings -= config.learning_rate * grad
    return model


def grad_check(
    model: EncoderModel,
    pairs: list[tuple[str, str]],
    epsilon: float = 1e-5,
    n_coords: int = 20,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if not pairs:
        raise ValueError("need at least one pair")
    _, grad = loss_and_grad(model, pairs)
    rng = np.random.default_rng(seed)
    involved = sorted({i for text in {t for p in pairs for t in p} for i in model.token_ids(text)})
    if not involved:
        return 0.0
    worst = 0.0
    for _ in range(n_coords):
        row = involved[int(rng.integers(len(involved)))]
        col = int(rng.integers(model.d))
        orig = model.embeddings[row, col]
        model.embeddings[row, col] = orig + epsilon
        plus, _ = loss_and_grad(model, pairs)
        model.embeddings[row, col] = orig - epsilon
        minus, _ = loss_and_grad(model, pairs)
        model.embeddings[row, col] = orig
        fd = (plus - minus) / (2 * epsilon)
        a = grad[row, col]
        err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
        worst = max(worst, err)
    return worst


def save_encoder(model: EncoderModel, path: str | Path) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "d": model.d,
        "vocab": model.vocab,
        "embeddings": model.embeddings.tolist(),
        "w": model.w,
        "b": model.b,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_encoder(path: str | Path) -> EncoderModel:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing encoder checkpoint: {p}")
    payload = json.loads(p.read_text(encoding="utf-8"))
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported encoder checkpoint version: {payload.get('version')!r}")
    model = EncoderModel(
        vocab=payload["vocab"],
        embeddings=np.array(payload["embeddings"], dtype=float),
        w=float(payload["w"]),
        b=float(payload["b"]),
    )
    if model.embeddings.shape != (len(model.vocab), payload["d"]):
        raise DataError("encoder checkpoint shape mismatch")
    return model
