"""Word-level F1 and the three-branch candidate reward."""

from __future__ import annotations

from collections import Counter
from typing import Sequence

from ..data import tokenize

EXACT_REWARD = 2.0
DISJOINT_REWARD = -1.0


def token_f1(prediction: Sequence[str], gold: Sequence[str]) -> float:
    """Multiset token-overlap F1; 0 when either side is empty."""
    if not prediction or not gold:
        return 0.0
    overlap = sum((Counter(prediction) & Counter(gold)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(prediction)
    recall = overlap / len(gold)
    return 2.0 * precision * recall / (precision + recall)


def reward_tokens(prediction: Sequence[str], golds: Sequence[Sequence[str]]) -> float:
    """Best reward over gold token sequences: 2 exact, F1 on overlap, -1 otherwise."""
    best = DISJOINT_REWARD
    pred = list(prediction)
    for gold in golds:
        if pred == list(gold):
            return EXACT_REWARD
        f1 = token_f1(pred, gold)
        if f1 > 0.0:
            best = max(best, f1)
    return best


def reward(candidate: str, answers: Sequence[str]) -> float:
    if not answers:
        raise ValueError("reward needs at least one gold answer")
    return reward_tokens(tokenize(candidate), [tokenize(a) for a in answers])


def exact_match(prediction: Sequence[str], golds: Sequence[Sequence[str]]) -> bool:
    pred = list(prediction)
    return any(pred == list(g) for g in golds)


def best_f1(prediction: Sequence[str], golds: Sequence[Sequence[str]]) -> float:
    return max((token_f1(prediction, g) for g in golds), default=0.0)
