"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward, no_grad

# Denominator floor: entries whose true gradient is below this are compared
# absolutely, since finite differences carry ~1e-10 absolute noise.
REL_FLOOR = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(f: Callable[[], float], p: Tensor, step: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(p.data)
    flat, gflat = p.data.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + step
        up = f()
        flat[k] = old - step
        down = f()
        flat[k] = old
        gflat[k] = (up - down) / (2.0 * step)
    return g


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
) -> dict[str, float]:
    """Max relative error per parameter between autodiff and central differences.

    ``loss_fn`` must be deterministic (no dropout) and rebuild its graph on
    every call.
    """
    for p in params.values():
        p.zero_grad()
    backward(loss_fn())
    analytic = {k: p.grad.copy() for k, p in params.items()}

    def value() -> float:
        with no_grad():
            return loss_fn().item()

    errors = {}
    for name, p in params.items():
        numeric = numeric_grad(value, p, step)
        errors[name] = float(relative_error(analytic[name], numeric).max(initial=0.0))
    return errors
