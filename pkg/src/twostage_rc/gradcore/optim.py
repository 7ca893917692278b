"""RMSProp over a named parameter table."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .tensor import Tensor


class RMSProp:
    """``acc <- rho*acc + (1-rho)*g^2``, ``p <- p - lr*g/sqrt(acc+eps)``."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float,
        rho: float = 0.9,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.accumulators = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            acc = self.accumulators[name]
            acc *= self.rho
            acc += (1.0 - self.rho) * g * g
            p.data -= self.lr * g / np.sqrt(acc + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "rho": self.rho,
            "eps": self.eps,
            "accumulators": {k: v.copy() for k, v in self.accumulators.items()},
        }

    def load_state_dict(self, state: Mapping) -> None:
        self.lr = state["lr"]
        self.rho = state["rho"]
        self.eps = state["eps"]
        for k, v in state["accumulators"].items():
            if k in self.accumulators:
                self.accumulators[k][...] = v
