"""Greedy question selection by expected information gain.

For each candidate question q we compute the answer marginal under the
current belief, the hypothetical posterior for each answer, and the
expected posterior entropy. The chosen question maximizes

    IG(q) = H(belief) - sum_r p(r | history, q) * H(belief | r)

which is the same as minimizing expected posterior entropy.
"""

from __future__ import annotations

import numpy as np

from .belief import BeliefState, ResponseModel, likelihood_table
from .dataset import Corpus, Question


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats; 0 log 0 taken as 0."""
    p = np.asarray(probs, dtype=float)
    terms = np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)
    return float(-terms.sum())


def eligible_questions(corpus: Corpus, state: BeliefState) -> list[Question]:
    """Bank-order questions not yet asked and not in a skipped part group."""
    out = []
    for q in corpus.questions:
        if q.id in state.asked:
            continue
        if q.group is not None and q.group in state.skipped_groups:
            continue
        out.append(q)
    return out


def answer_marginal(state: BeliefState, question: Question, rm: ResponseModel) -> np.ndarray:
    """p(r | history, q) over R(q): belief-weighted response likelihoods."""
    lik = likelihood_table(rm, question)
    return state.probs() @ lik


def posterior_entropy(state: BeliefState, question: Question, answer: str, rm: ResponseModel) -> float:
    """Entropy of the hypothetical posterior after observing (question, answer).

    Uses the raw likelihood column (no flooring), matching the gain
    computation; the state is not modified. A zero-marginal answer
    contributes nothing, so it returns 0.
    """
    if answer not in question.answers:
        raise ValueError(f"answer {answer!r} not in R({question.id})")
    col = question.answers.index(answer)
    joint = state.probs() * likelihood_table(rm, question)[:, col]
    total = joint.sum()
    if total <= 0.0:
        return 0.0
    return entropy(joint / total)


def conditional_entropy(state: BeliefState, question: Question, rm: ResponseModel) -> float:
    """Expected posterior entropy after observing this question's answer."""
    belief = state.probs()
    lik = likelihood_table(rm, question)
    joint = belief[:, None] * lik  # N x |R|
    marg = joint.sum(axis=0)
    total = 0.0
    for r in range(marg.size):
        if marg[r] <= 0.0:
            continue
        total += marg[r] * entropy(joint[:, r] / marg[r])
    return total


def information_gain(state: BeliefState, question: Question, rm: ResponseModel) -> float:
    return entropy(state.probs()) - conditional_entropy(state, question, rm)


def rank_questions(state: BeliefState, corpus: Corpus, rm: ResponseModel) -> list[tuple[str, float]]:
    """(question_id, information gain) for every eligible question, bank order."""
    return [(q.id, information_gain(state, q, rm)) for q in eligible_questions(corpus, state)]


def select_question(state: BeliefState, corpus: Corpus, rm: ResponseModel) -> Question | None:
    """Highest-gain eligible question; earliest in the bank wins ties.

    Returns None when every question has been asked or skipped.
    """
    best: Question | None = None
    best_gain = -np.inf
    h = entropy(state.probs())
    for q in eligible_questions(corpus, state):
        gain = h - conditional_entropy(state, q, rm)
        if gain > best_gain:
            best, best_gain = q, gain
    return best
