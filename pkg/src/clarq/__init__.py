"""Interactive classification with clarifying questions.

Maintains a Bayesian belief over labels from an initial query, asks the
maximum-information-gain question each turn, and decides when to stop with
a small learned controller.
"""

from .belief import (
    BeliefState,
    ResponseModel,
    init_belief,
    predict,
    response_prob,
    top_k,
    update_belief,
)
from .dataset import Corpus, DataError, Label, Question, load_corpus, save_corpus, synth_corpus
from .encoder import EncoderModel, load_encoder, prior, save_encoder, train_encoder
from .evaluation import Engine, SuiteConfig, evaluate_suite, run_interaction
from .policy import PolicyModel, PolicyTrainConfig, RewardConfig, load_policy, save_policy, train_policy
from .selection import (
    answer_marginal,
    conditional_entropy,
    entropy,
    information_gain,
    posterior_entropy,
    select_question,
)
from .simulator import Simulator, fit_simulator

__all__ = [
    "BeliefState",
    "Corpus",
    "DataError",
    "EncoderModel",
    "Engine",
    "Label",
    "PolicyModel",
    "PolicyTrainConfig",
    "Question",
    "ResponseModel",
    "RewardConfig",
    "Simulator",
    "SuiteConfig",
    "answer_marginal",
    "conditional_entropy",
    "entropy",
    "evaluate_suite",
    "fit_simulator",
    "information_gain",
    "init_belief",
    "load_corpus",
    "load_encoder",
    "load_policy",
    "posterior_entropy",
    "predict",
    "prior",
    "response_prob",
    "run_interaction",
    "save_corpus",
    "save_encoder",
    "save_policy",
    "select_question",
    "synth_corpus",
    "top_k",
    "train_encoder",
    "train_policy",
    "update_belief",
]
