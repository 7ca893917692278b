"""Finite-difference check of both models on a small fixed instance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig, TrainConfig
from .data import Example, build_vocab
from .extraction import CandidateSet, Span, build_candidate_set, mle_extract_loss, set_log_prob, span_text
from .gradcore import Tensor, backward, ops
from .gradcore.gradcheck import check_gradients
from .rl.objective import candidate_rewards, enumerate_candidate_sets, expected_reward_loss, reinforce_surrogate
from .selection import gold_matches, mle_select_loss
from .state import TrainState, derive_rng

TOY_MODEL = ModelConfig(d_w=5, d_h=3, d_c=4, d_common=4, d_dist=3, max_dist=20)
TOY_VOCAB = 20  # including PAD and UNK
TOY_PASSAGES = 2
TOY_LEN = 8


@dataclass
class GradReport:
    errors: dict[str, float]
    n_params: int

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def toy_instance(seed: int) -> tuple[Example, TrainState, list[list[Span]]]:
    """Random example, fresh models and one sampled K=2 candidate set.

    The gold answer is the text of the first sampled candidate, so every
    loss term below has something to match.
    """
    rng = derive_rng(seed, "grad-check", "instance")
    words = [f"t{i}" for i in range(TOY_VOCAB - 2)]
    passages = [[words[int(i)] for i in rng.integers(len(words), size=TOY_LEN)] for _ in range(TOY_PASSAGES)]
    question = [words[int(i)] for i in rng.integers(len(words), size=4)]
    state = TrainState.fresh(build_vocab([words]), TOY_MODEL, TrainConfig(K=2, L_max=3, seed=seed, dropout=0.0))
    draft = Example("toy", question, ["?"], passages)
    dists = state.extraction.distributions(draft, state.vocab, state.train_cfg.L_max)
    cset = build_candidate_set(dists, state.train_cfg.K, "sampled", rng)
    ex = Example("toy", question, [span_text(draft, cset.spans[0])], passages)
    return ex, state, cset.by_passage(TOY_PASSAGES)


def gradient_suite(seed: int = 7, step: float = 1e-5) -> GradReport:
    """Max relative error per parameter tensor of both models.

    The checked objective is the REINFORCE surrogate for the sampled
    candidate set, with its return frozen at the initial parameters so that
    it is an ordinary function, plus both maximum-likelihood pretraining
    losses. The candidate set is fixed, so the objective splits into an
    extraction part and a selection part, and each model is checked against
    its own part.
    """
    ex, state, chosen = toy_instance(seed)
    L_max = state.train_cfg.L_max
    spans = sorted(s for group in chosen for s in group)
    matches = gold_matches(ex, spans)
    rewards = Tensor(candidate_rewards(ex, spans))

    def expected_reward():
        return ops.sum(state.selection.forward(ex, spans, state.vocab).probs * rewards)

    ret = expected_reward().item()

    def extraction_part():
        dists = state.extraction.distributions(ex, state.vocab, L_max)
        surrogate = ops.mul(set_log_prob(chosen, dists), -ret)
        return surrogate + mle_extract_loss(ex, state.extraction, state.vocab, L_max)

    def selection_part():
        out = state.selection.forward(ex, spans, state.vocab)
        return ops.neg(ops.sum(out.probs * rewards)) + mle_select_loss(out.scores, matches)

    errors = check_gradients(extraction_part, _prefixed(state, "extraction/"), step)
    errors.update(check_gradients(selection_part, _prefixed(state, "selection/"), step))
    params = state.params()
    return GradReport(errors, int(sum(p.size for p in params.values())))


def _prefixed(state: TrainState, prefix: str) -> dict:
    return {k: v for k, v in state.params().items() if k.startswith(prefix)}


def enumerable_instance(seed: int) -> tuple[Example, TrainState]:
    """Two passages of two tokens (three spans each) and K=1: nine candidate sets."""
    rng = derive_rng(seed, "reinforce", "instance")
    words = [f"t{i}" for i in range(TOY_VOCAB - 2)]
    passages = [[words[int(i)] for i in rng.integers(len(words), size=2)] for _ in range(2)]
    question = [words[int(i)] for i in rng.integers(len(words), size=3)]
    gold = [passages[0][0]] if rng.random() < 0.5 else passages[1]
    ex = Example("enum", question, [" ".join(gold)], passages)
    state = TrainState.fresh(build_vocab([words]), TOY_MODEL, TrainConfig(K=1, L_max=3, seed=seed, dropout=0.0))
    return ex, state


def reinforce_exactness(seed: int = 0) -> tuple[float, float, int]:
    """Largest componentwise gap between the exact and the estimated gradient.

    The exact gradient is autodiff through the enumerated expected-reward
    objective. The estimate is the single-sample surrogate gradient averaged
    over every candidate set with weight P(set). Returns the gap, the largest
    exact gradient component (so callers can tell the check is not vacuous)
    and the number of candidate sets.
    """
    ex, state = enumerable_instance(seed)
    params = state.params()
    L_max, K = state.train_cfg.L_max, state.train_cfg.K

    def grads() -> dict[str, np.ndarray]:
        return {k: p.grad.copy() for k, p in params.items()}

    for p in params.values():
        p.zero_grad()
    backward(expected_reward_loss(ex, state))
    exact = grads()

    dists = state.extraction.distributions(ex, state.vocab, L_max)
    sets = enumerate_candidate_sets(dists, K, state.train_cfg.enum_budget)
    estimate = {k: np.zeros_like(v) for k, v in exact.items()}
    for chosen in sets:
        for p in params.values():
            p.zero_grad()
        dists = state.extraction.distributions(ex, state.vocab, L_max)
        set_logp = set_log_prob(chosen, dists)
        spans = sorted(s for group in chosen for s in group)
        cset = CandidateSet(spans, np.zeros(len(spans)), set_logp, "enumerated")
        backward(reinforce_surrogate(ex, state, dists, cset).loss)
        weight = float(np.exp(set_logp.item()))
        for k, g in grads().items():
            estimate[k] += weight * g
    gap = max(float(np.max(np.abs(exact[k] - estimate[k]))) for k in exact)
    scale = max(float(np.max(np.abs(g))) for g in exact.values())
    return gap, scale, len(sets)
