"""LSTM recurrences.

Gate layout follows one fused weight ``W`` of shape ``[d_in + d_h, 4 d_h]``
acting on ``[x; h]`` and one bias ``b`` of shape ``[4 d_h]``, with gate
blocks ordered input, forget, cell candidate, output.

:func:`lstm_cell` composes engine primitives and is the reference.
:func:`lstm_seq` runs a whole batch of equal-length sequences as a single
graph node with its own backpropagation through time; it is what the models
use, and the tests hold it against the composed cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ops
from .tensor import DimensionError, Tensor, make_result


def _check_params(d_in: int, d_h: int, W: Tensor, b: Tensor) -> None:
    if W.shape != (d_in + d_h, 4 * d_h) or b.shape != (4 * d_h,):
        raise DimensionError(
            f"LSTM params {W.shape}/{b.shape} do not fit d_in={d_in}, d_h={d_h}"
        )


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One step for a single ``[d_in]`` input; returns ``(h', c')``."""
    d_in, d_h = x.shape[0], h.shape[0]
    if c.shape != h.shape:
        raise DimensionError(f"cell state {c.shape} does not match hidden {h.shape}")
    _check_params(d_in, d_h, W, b)
    xh = ops.reshape(ops.concat([x, h]), (1, d_in + d_h))
    z = ops.reshape(ops.matmul(xh, W), (4 * d_h,)) + b
    i = ops.sigmoid(z[0:d_h])
    f = ops.sigmoid(z[d_h : 2 * d_h])
    g = ops.tanh(z[2 * d_h : 3 * d_h])
    o = ops.sigmoid(z[3 * d_h :])
    c_new = f * c + i * g
    h_new = o * ops.tanh(c_new)
    return h_new, c_new


def lstm_seq(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Run ``[B, T, d_in]`` inputs from zero state; returns hidden states ``[B, T, d_h]``."""
    if x.ndim != 3:
        raise DimensionError(f"lstm_seq needs [B, T, d_in], got {x.shape}")
    B, T, d_in = x.shape
    d_h = b.shape[0] // 4
    _check_params(d_in, d_h, W, b)
    Wd, bd, xd = W.data, b.data, x.data
    Wx, Wh = Wd[:d_in], Wd[d_in:]

    # sigmoid(z) = 0.5 + 0.5 tanh(z / 2), so all four gates take one tanh call
    # on pre-halved sigmoid blocks; scale doubles as the post-tanh multiplier
    scale = np.full(4 * d_h, 0.5)
    scale[2 * d_h : 3 * d_h] = 1.0
    shift = 1.0 - scale
    # input projections for every step at once; only h @ Wh stays in the loop
    Zx = ((xd.reshape(B * T, d_in) @ Wx).reshape(B, T, 4 * d_h) + bd) * scale
    Wh_s = Wh * scale
    H = np.empty((B, T, d_h))
    hs = np.zeros((T + 1, B, d_h))
    gates = np.empty((T, B, 4 * d_h))
    cs = np.zeros((T + 1, B, d_h))
    tcs = np.empty((T, B, d_h))
    for t in range(T):
        a = gates[t]
        np.tanh(Zx[:, t] + hs[t] @ Wh_s, out=a)
        a *= scale
        a += shift
        cs[t + 1] = a[:, d_h : 2 * d_h] * cs[t] + a[:, :d_h] * a[:, 2 * d_h : 3 * d_h]
        tcs[t] = np.tanh(cs[t + 1])
        hs[t + 1] = a[:, 3 * d_h :] * tcs[t]
        H[:, t] = hs[t + 1]

    def bw(gH):
        dZ = np.empty((T, B, 4 * d_h))
        dh_next = np.zeros((B, d_h))
        dc_next = np.zeros((B, d_h))
        for t in range(T - 1, -1, -1):
            a = gates[t]
            i, f = a[:, :d_h], a[:, d_h : 2 * d_h]
            g, o = a[:, 2 * d_h : 3 * d_h], a[:, 3 * d_h :]
            tc = tcs[t]
            dh = gH[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dZ[t]
            dz[:, :d_h] = dc * g * i * (1.0 - i)
            dz[:, d_h : 2 * d_h] = dc * cs[t] * f * (1.0 - f)
            dz[:, 2 * d_h : 3 * d_h] = dc * i * (1.0 - g * g)
            dz[:, 3 * d_h :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ Wh.T
        flat_dz = dZ.reshape(T * B, 4 * d_h)
        x_tb = np.swapaxes(xd, 0, 1).reshape(T * B, d_in)
        dW = np.concatenate([x_tb.T @ flat_dz, hs[:-1].reshape(T * B, d_h).T @ flat_dz])
        db = flat_dz.sum(axis=0)
        dx = np.swapaxes((flat_dz @ Wx.T).reshape(T, B, d_in), 0, 1)
        return dx, dW, db

    return make_result(H, (x, W, b), bw)


@dataclass
class BiLSTM:
    """A bidirectional single-layer encoder; outputs are ``[fw; bw]`` of width ``2 d_h``."""

    fw_W: Tensor
    fw_b: Tensor
    bw_W: Tensor
    bw_b: Tensor

    @property
    def d_h(self) -> int:
        return self.fw_b.shape[0] // 4

    @property
    def d_in(self) -> int:
        return self.fw_W.shape[0] - self.d_h

    def batch(self, x: Tensor) -> Tensor:
        """Encode ``[B, T, d_in]`` equal-length sequences into ``[B, T, 2 d_h]``."""
        fw = lstm_seq(x, self.fw_W, self.fw_b)
        bw = ops.flip(lstm_seq(ops.flip(x, 1), self.bw_W, self.bw_b), 1)
        return ops.concat([fw, bw], axis=2)

    def __call__(self, seqs: Sequence[Tensor]) -> list[Tensor]:
        """Encode ``[T_i, d_in]`` sequences of any lengths; equal lengths share one batch."""
        groups: dict[int, list[int]] = {}
        for k, s in enumerate(seqs):
            if s.ndim != 2 or s.shape[0] == 0:
                raise DimensionError(f"BiLSTM input must be a non-empty [T, d], got {s.shape}")
            groups.setdefault(s.shape[0], []).append(k)
        out: list[Tensor | None] = [None] * len(seqs)
        for members in groups.values():
            enc = self.batch(ops.stack([seqs[k] for k in members]))
            for j, k in enumerate(members):
                out[k] = enc[j]
        return out  # type: ignore[return-value]
