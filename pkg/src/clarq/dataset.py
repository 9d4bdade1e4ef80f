"""Corpus data model: labels, clarification questions, annotation records, splits.

File layout (one directory per corpus):
  labels.jsonl       {"id": str, "text": str}
  questions.jsonl    {"id": str, "text": str, "kind": "binary"|"multichoice",
                      "answers": [str], "group": str|null}
  annotations.jsonl  {"label_id": str, "initial_queries": [str],
                      "qa_pairs": [{"q": str, "r": str}]}
  split.json         {"train": [ids], "dev": [ids], "test": [ids]}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BINARY_ANSWERS = ["yes", "no"]
NOT_APPLICABLE = "Not applicable"
NOT_VISIBLE = "not visible"


class DataError(ValueError):
    """Malformed or inconsistent corpus data."""


@dataclass
class Label:
    id: str
    text: str


@dataclass
class Question:
    id: str
    text: str
    kind: str  # "binary" | "multichoice"
    answers: list[str]
    group: str | None = None

    def tag_text(self) -> str:
        """Recover the underlying tag phrase from a templated question.

        "Is it about X?" and "What is your X?" yield X; anything else falls
        back to the question text without the trailing question mark.
        """
        m = re.fullmatch(r"Is it about (.*)\?", self.text)
        if m:
            return m.group(1)
        m = re.fullmatch(r"What is your (.*)\?", self.text)
        if m:
            return m.group(1)
        return self.text.rstrip("?").strip()

    def accepts(self, answer: str) -> bool:
        if answer in self.answers:
            return True
        return answer == NOT_VISIBLE and self.group is not None


@dataclass
class AnnotationRecord:
    label_id: str
    initial_queries: list[str]
    qa_pairs: list[tuple[str, str]]  # (question_id, answer)


@dataclass
class Split:
    train: list[str]
    dev: list[str]
    test: list[str]

    def all_ids(self) -> set[str]:
        return set(self.train) | set(self.dev) | set(self.test)


@dataclass
class Corpus:
    labels: list[Label]
    questions: list[Question]
    records: list[AnnotationRecord]
    split: Split
    label_index: dict[str, int] = field(init=False)
    question_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.label_index = {lab.id: i for i, lab in enumerate(self.labels)}
        self.question_index = {q.id: i for i, q in enumerate(self.questions)}

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def label(self, label_id: str) -> Label:
        return self.labels[self.label_index[label_id]]

    def question(self, question_id: str) -> Question:
        return self.questions[self.question_index[question_id]]

    def records_for(self, label_ids) -> list[AnnotationRecord]:
        wanted = set(label_ids)
        return [r for r in self.records if r.label_id in wanted]

    def label_tag_texts(self, label_id: str) -> list[str]:
        """Tag phrases that describe a label, per its annotated answers.

        Binary yes answers contribute the question tag; multichoice answers
        contribute the chosen value text. Used for pseudo-query augmentation.
        """
        seen: list[str] = []
        for rec in self.records:
            if rec.label_id != label_id:
                continue
            for qid, answer in rec.qa_pairs:
                q = self.question(qid)
                if q.kind == "binary":
                    tag = q.tag_text() if answer == "yes" else None
                elif answer in (NOT_APPLICABLE, NOT_VISIBLE):
                    tag = None
                else:
                    tag = answer
                if tag and tag not in seen:
                    seen.append(tag)
        return seen


def _validate(corpus: Corpus, origin: dict | None = None) -> None:
    origin = origin or {}

    seen_labels: set[str] = set()
    for lab in corpus.labels:
        if lab.id in seen_labels:
            raise DataError(f"duplicate label id {lab.id!r}")
        if not lab.text:
            raise DataError(f"label {lab.id!r} has empty text")
        seen_labels.add(lab.id)

    seen_q: set[str] = set()
    for q in corpus.questions:
        if q.id in seen_q:
            raise DataError(f"duplicate question id {q.id!r}")
        seen_q.add(q.id)
        if q.kind not in ("binary", "multichoice"):
            raise DataError(f"question {q.id!r} has unknown kind {q.kind!r}")
        if len(q.answers) < 2:
            raise DataError(f"question {q.id!r} needs at least 2 answers")
        if len(set(q.answers)) != len(q.answers):
            raise DataError(f"question {q.id!r} has duplicate answers")
        if q.kind == "binary" and sorted(q.answers) != sorted(BINARY_ANSWERS):
            raise DataError(f"binary question {q.id!r} must have answers yes/no")

    for i, rec in enumerate(corpus.records):
        where = origin.get(i, f"record {i}")
        if rec.label_id not in corpus.label_index:
            raise DataError(f"{where}: unknown label_id {rec.label_id!r}")
        for qid, answer in rec.qa_pairs:
            if qid not in corpus.question_index:
                raise DataError(
                    f"{where} (label {rec.label_id!r}): unknown question_id {qid!r}"
                )
            q = corpus.question(qid)
            if not q.accepts(answer):
                raise DataError(
                    f"{where} (label {rec.label_id!r}): answer {answer!r} not in "
                    f"R({qid}) = {q.answers}"
                )

    split = corpus.split
    parts = [set(split.train), set(split.dev), set(split.test)]
    if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
        raise DataError("split sets overlap")
    covered = parts[0] | parts[1] | parts[2]
    if covered != seen_labels:
        missing = seen_labels - covered
        extra = covered - seen_labels
        raise DataError(f"split does not partition labels (missing={sorted(missing)}, unknown={sorted(extra)})")


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    if not path.exists():
        raise DataError(f"missing file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path.name}:{lineno}: malformed JSON ({exc})") from exc
    return rows


def load_corpus(path: str | Path) -> Corpus:
    """Load and cross-validate a corpus directory."""
    root = Path(path)
    if root.is_file():
        root = root.parent

    labels = []
    for lineno, row in _read_jsonl(root / "labels.jsonl"):
        try:
            labels.append(Label(id=row["id"], text=row["text"]))
        except KeyError as exc:
            raise DataError(f"labels.jsonl:{lineno}: missing key {exc}") from exc

    questions = []
    for lineno, row in _read_jsonl(root / "questions.jsonl"):
        try:
            questions.append(
                Question(
                    id=row["id"],
                    text=row["text"],
                    kind=row["kind"],
                    answers=list(row["answers"]),
                    group=row.get("group"),
                )
            )
        except KeyError as exc:
            raise DataError(f"questions.jsonl:{lineno}: missing key {exc}") from exc

    records = []
    origin = {}
    for lineno, row in _read_jsonl(root / "annotations.jsonl"):
        try:
            rec = AnnotationRecord(
                label_id=row["label_id"],
                initial_queries=list(row["initial_queries"]),
                qa_pairs=[(p["q"], p["r"]) for p in row["qa_pairs"]],
            )
        except KeyError as exc:
            raise DataError(f"annotations.jsonl:{lineno}: missing key {exc}") from exc
        origin[len(records)] = f"annotations.jsonl:{lineno}"
        records.append(rec)

    split_path = root / "split.json"
    if not split_path.exists():
        raise DataError(f"missing file: {split_path}")
    raw = json.loads(split_path.read_text(encoding="utf-8"))
    try:
        split = Split(train=list(raw["train"]), dev=list(raw["dev"]), test=list(raw["test"]))
    except KeyError as exc:
        raise DataError(f"split.json: missing key {exc}") from exc

    corpus = Corpus(labels=labels, questions=questions, records=records, split=split)
    _validate(corpus, origin)
    return corpus


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the four corpus files with canonical key ordering."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    def dump(obj) -> str:
        return json.dumps(obj, sort_keys=True, ensure_ascii=False)

    with open(root / "labels.jsonl", "w", encoding="utf-8") as fh:
        for lab in corpus.labels:
            fh.write(dump({"id": lab.id, "text": lab.text}) + "\n")
    with open(root / "questions.jsonl", "w", encoding="utf-8") as fh:
        for q in corpus.questions:
            fh.write(
                dump(
                    {
                        "id": q.id,
                        "text": q.text,
                        "kind": q.kind,
                        "answers": q.answers,
                        "group": q.group,
                    }
                )
                + "\n"
            )
    with open(root / "annotations.jsonl", "w", encoding="utf-8") as fh:
        for rec in corpus.records:
            fh.write(
                dump(
                    {
                        "label_id": rec.label_id,
                        "initial_queries": rec.initial_queries,
                        "qa_pairs": [{"q": q, "r": r} for q, r in rec.qa_pairs],
                    }
                )
                + "\n"
            )
    (root / "split.json").write_text(
        dump({"train": corpus.split.train, "dev": corpus.split.dev, "test": corpus.split.test}) + "\n",
        encoding="utf-8",
    )


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def tags_to_questions(tags: list[tuple[str, str, list[str]]]) -> list[Question]:
    """Convert (tag text, kind, value set) triples into templated questions.

    Binary tags become "Is it about {tag}?" with yes/no answers; categorical
    tags become "What is your {tag}?" with the value set plus "Not applicable".
    """
    seen: set[str] = set()
    questions = []
    for tag, kind, values in tags:
        if tag in seen:
            raise DataError(f"duplicate tag text {tag!r}")
        seen.add(tag)
        if kind == "binary":
            if values:
                raise DataError(f"binary tag {tag!r} must have an empty value set")
            questions.append(
                Question(id=_slug(tag), text=f"Is it about {tag}?", kind="binary", answers=list(BINARY_ANSWERS))
            )
        elif kind in ("multichoice", "categorical"):
            if len(values) < 2:
                raise DataError(f"categorical tag {tag!r} needs at least 2 values")
            questions.append(
                Question(
                    id=_slug(tag),
                    text=f"What is your {tag}?",
                    kind="multichoice",
                    answers=list(values) + [NOT_APPLICABLE],
                )
            )
        else:
            raise DataError(f"tag {tag!r} has unknown kind {kind!r}")
    return questions


# Synthetic worlds: each label carries a distinct bit-vector over n attributes.
# Attribute j is exposed as a two-answer multichoice question whose answer
# strings are attribute-specific single tokens, so the answer text itself
# names the attribute value (the same words appear in label texts and
# queries). Bit 1 maps to the "round{j}" value, bit 0 to "flat{j}".

_QUERY_PREFIXES = ["looking for", "need", "searching for", "want", "show me"]


def _attr_value(j: int, bit: int) -> str:
    return f"round{j}" if bit else f"flat{j}"


def synth_corpus(
    n_labels: int,
    n_binary_attrs: int,
    flip_noise: float,
    seed: int,
    *,
    n_records: int = 3,
    n_queries: int = 2,
    query_mentions: tuple[int, int] | None = None,
) -> Corpus:
    """Generate a deterministic synthetic corpus for testing and evaluation.

    Each label gets a distinct attribute code; annotation records answer every
    question per the code with per-record flip noise, and initial queries
    mention a small random subset of the label's attribute values.
    """
    if n_binary_attrs < 1 or n_labels < 1:
        raise DataError("need at least one label and one attribute")
    if not 0.0 <= flip_noise <= 1.0:
        raise DataError("flip_noise must be in [0, 1]")
    capacity = 2**n_binary_attrs
    if capacity < n_labels:
        raise DataError(f"capacity exceeded: 2^{n_binary_attrs} = {capacity} < {n_labels} labels")

    rng = np.random.default_rng(seed)
    if capacity <= 2**20:
        codes = rng.choice(capacity, size=n_labels, replace=False)
    else:
        chosen: set[int] = set()
        while len(chosen) < n_labels:
            chosen.add(int(rng.integers(capacity)))
        codes = np.array(sorted(chosen))
        rng.shuffle(codes)
    bit_rows = [[(int(c) >> j) & 1 for j in range(n_binary_attrs)] for c in codes]

    questions = [
        Question(
            id=f"q{j}",
            text=f"What is your part{j}?",
            kind="multichoice",
            answers=[_attr_value(j, 1), _attr_value(j, 0)],
        )
        for j in range(n_binary_attrs)
    ]

    if query_mentions is None:
        lo = min(2, n_binary_attrs)
        hi = min(3, n_binary_attrs)
        query_mentions = (lo, hi)

    labels = []
    records = []
    for i, bits in enumerate(bit_rows):
        label_id = f"label{i:03d}"
        words = [_attr_value(j, b) for j, b in enumerate(bits)]
        labels.append(Label(id=label_id, text=" ".join(words)))
        for _ in range(n_records):
            queries = []
            for _ in range(n_queries):
                k = int(rng.integers(query_mentions[0], query_mentions[1] + 1))
                picked = sorted(rng.choice(n_binary_attrs, size=k, replace=False))
                prefix = _QUERY_PREFIXES[int(rng.integers(len(_QUERY_PREFIXES)))]
                queries.append(prefix + " " + " ".join(_attr_value(j, bits[j]) for j in picked))
            qa = []
            for j, b in enumerate(bits):
                observed = b ^ 1 if rng.random() < flip_noise else b
                qa.append((f"q{j}", _attr_value(j, observed)))
            records.append(AnnotationRecord(label_id=label_id, initial_queries=queries, qa_pairs=qa))

    ids = [lab.id for lab in labels]
    order = list(rng.permutation(n_labels))
    if n_labels >= 5:
        n_train = round(0.6 * n_labels)
        n_dev = max(1, round(0.2 * n_labels))
    else:
        n_train, n_dev = n_labels, 0
    shuffled = [ids[i] for i in order]
    split = Split(
        train=sorted(shuffled[:n_train]),
        dev=sorted(shuffled[n_train : n_train + n_dev]),
        test=sorted(shuffled[n_train + n_dev :]),
    )

    corpus = Corpus(labels=labels, questions=questions, records=records, split=split)
    _validate(corpus)
    return corpus


def synth_code(corpus: Corpus, label_id: str) -> list[int]:
    """Recover a synthetic label's bit-vector from its text."""
    words = set(corpus.label(label_id).text.split())
    bits = []
    for j in range(len(corpus.questions)):
        if _attr_value(j, 1) in words:
            bits.append(1)
        elif _attr_value(j, 0) in words:
            bits.append(0)
        else:
            raise DataError(f"label {label_id!r} is not synthetic")
    return bits
