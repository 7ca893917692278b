"""Parameter construction helpers."""

from __future__ import annotations

import numpy as np

from .lstm import BiLSTM
from .tensor import Tensor


def uniform(rng: np.random.Generator, shape, scale: float = 0.1, name: str | None = None) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True, name=name)


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, name: str | None = None) -> Tensor:
    """Glorot-uniform ``[fan_in, fan_out]`` matrix."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True, name=name)


def zeros(shape, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def lstm_params(rng: np.random.Generator, d_in: int, d_h: int) -> tuple[Tensor, Tensor]:
    W = uniform(rng, (d_in + d_h, 4 * d_h))
    b = np.zeros(4 * d_h)
    b[d_h : 2 * d_h] = 1.0  # forget gate
    return W, Tensor(b, requires_grad=True)


def bilstm(rng: np.random.Generator, d_in: int, d_h: int) -> BiLSTM:
    fw_W, fw_b = lstm_params(rng, d_in, d_h)
    bw_W, bw_b = lstm_params(rng, d_in, d_h)
    return BiLSTM(fw_W, fw_b, bw_W, bw_b)


def bilstm_params(prefix: str, enc: BiLSTM) -> dict[str, Tensor]:
    return {
        f"{prefix}.fw.W": enc.fw_W,
        f"{prefix}.fw.b": enc.fw_b,
        f"{prefix}.bw.W": enc.bw_W,
        f"{prefix}.bw.b": enc.bw_b,
    }
