"""Reward, expected-reward objective, REINFORCE, and the training loops."""

from .reward import best_f1, exact_match, reward, reward_tokens, token_f1
from .objective import (
    EnumerationBudgetError,
    candidate_rewards,
    enumerate_candidate_sets,
    expected_reward_loss,
    reinforce_step,
    reinforce_surrogate,
)
from .train import Reporter, joint_train, pretrain, pretrain_extract, pretrain_select

__all__ = [
    "EnumerationBudgetError",
    "Reporter",
    "best_f1",
    "candidate_rewards",
    "enumerate_candidate_sets",
    "exact_match",
    "expected_reward_loss",
    "joint_train",
    "pretrain",
    "pretrain_extract",
    "pretrain_select",
    "reinforce_step",
    "reinforce_surrogate",
    "reward",
    "reward_tokens",
    "token_f1",
]
