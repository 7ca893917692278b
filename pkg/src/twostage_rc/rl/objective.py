"""Expected-reward objective and its REINFORCE estimator."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..data import Example, tokenize
from ..extraction import CandidateSet, Span, SpanDistribution, build_candidate_set, set_log_prob
from ..gradcore import RMSProp, Tensor, backward, ops
from ..state import TrainState, derive_rng
from .reward import reward_tokens


class EnumerationBudgetError(RuntimeError):
    pass


def candidate_rewards(example: Example, spans: Sequence[Span]) -> np.ndarray:
    golds = [tokenize(a) for a in example.answers]
    return np.array(
        [reward_tokens(example.passages[s.passage][s.begin : s.end + 1], golds) for s in spans]
    )


def enumerate_candidate_sets(
    dists: Sequence[SpanDistribution], K: int, budget: int
) -> list[list[list[Span]]]:
    """Every per-passage choice of min(K, #spans) distinct spans, as a list of whole sets."""
    per_passage = [list(itertools.combinations(d.spans(), min(K, len(d)))) for d in dists]
    total = int(np.prod([len(c) for c in per_passage], dtype=np.float64))
    if total > budget:
        raise EnumerationBudgetError(f"{total} candidate sets exceed the budget of {budget}")
    return [[list(c) for c in combo] for combo in itertools.product(*per_passage)]


def expected_reward_loss(
    example: Example, state: TrainState, K: int | None = None, budget: int | None = None
) -> Tensor:
    """Exact ``-sum_C P(C) sum_c p(c | C) r(c)`` by enumerating every candidate set (no dropout)."""
    cfg = state.train_cfg
    K = K or cfg.K
    dists = state.extraction.distributions(example, state.vocab, cfg.L_max)
    terms = []
    for chosen in enumerate_candidate_sets(dists, K, budget or cfg.enum_budget):
        spans = sorted(s for group in chosen for s in group)
        p_set = ops.exp(set_log_prob(chosen, dists))
        probs = state.selection.forward(example, spans, state.vocab).probs
        ret = ops.sum(probs * Tensor(candidate_rewards(example, spans)))
        terms.append(p_set * ret)
    return ops.neg(ops.sum(ops.stack(terms)))


@dataclass
class Surrogate:
    loss: Tensor
    expected_reward: float
    cset: CandidateSet


def reinforce_surrogate(
    example: Example,
    state: TrainState,
    dists: Sequence[SpanDistribution],
    cset: CandidateSet,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    baseline: float = 0.0,
) -> Surrogate:
    """Scalar whose gradient is the single-sample estimate for one candidate set.

    ``-sum_c p(c|C) r(c)`` carries the selection gradient; ``-log P(C)`` times
    the (constant) expected reward carries the extraction gradient.
    """
    out = state.selection.forward(example, cset.spans, state.vocab, dropout, rng)
    rewards = candidate_rewards(example, cset.spans)
    expected = ops.sum(out.probs * Tensor(rewards))
    ret = float(expected.data)
    loss = ops.neg(expected) - cset.set_logp * (ret - baseline)
    return Surrogate(loss, ret, cset)


def reinforce_step(
    batch: Sequence[Example],
    state: TrainState,
    optimizer: RMSProp,
    baseline: float = 0.0,
) -> dict:
    """Sample one candidate set per example, average the surrogates, apply RMSProp."""
    cfg = state.train_cfg
    losses, returns = [], []
    for ex in batch:
        rng = derive_rng(cfg.seed, "rl", ex.id, state.step)
        dists = state.extraction.distributions(ex, state.vocab, cfg.L_max, cfg.dropout, rng)
        cset = build_candidate_set(dists, cfg.K, "sampled", rng)
        s = reinforce_surrogate(ex, state, dists, cset, cfg.dropout, rng, baseline)
        losses.append(s.loss)
        returns.append(s.expected_reward)
    state.step += 1
    if not losses:
        return {"step": state.step, "loss": 0.0, "mean_reward": 0.0, "n": 0}
    loss = ops.mean(ops.stack(losses))
    optimizer.zero_grad()
    backward(loss)
    optimizer.step()
    return {"step": state.step, "loss": loss.item(), "mean_reward": float(np.mean(returns)), "n": len(losses)}
