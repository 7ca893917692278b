"""Answer selection over a pooled candidate set.

Each candidate gets a condensed vector from its begin/end encodings, borrows
from every other candidate through an attention over the candidate
correlation matrix, and is scored after its passage is re-encoded with
candidate-aware features. Scores are normalized across all candidates.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Sequence

import csv
import numpy as np

from .config import FEATURES, ModelConfig
from .data import Example, Vocab, tokenize
from .extraction import Span, span_text
from .gradcore import Tensor, ops
from .gradcore import init as pinit


class BoundsError(IndexError):
    pass


def common_word_ids(passage: Sequence[str], question: Sequence[str]) -> np.ndarray:
    """1 where the passage token occurs anywhere in the question, else 0."""
    q = set(question)
    return np.array([1 if t in q else 0 for t in passage], dtype=np.int64)


def signed_distances(length: int, span: Span, max_dist: int = 20) -> np.ndarray:
    """Token distance to the span: 0 inside, negative before, positive after; clipped."""
    t = np.arange(length)
    d = np.where(t < span.begin, t - span.begin, np.where(t > span.end, t - span.end, 0))
    return np.clip(d, -max_dist, max_dist)


def _check_span(span: Span, length: int) -> None:
    if not 0 <= span.begin <= span.end < length:
        raise BoundsError(f"span ({span.begin}, {span.end}) outside a passage of length {length}")


@dataclass
class SelectionOutput:
    scores: Tensor  # [M]
    probs: Tensor  # [M]
    correlation: np.ndarray  # V, [M, M]
    attention: np.ndarray  # A, [M, M], zero diagonal


class SelectionModel:
    def __init__(
        self,
        vocab_size: int,
        cfg: ModelConfig,
        rng: np.random.Generator,
        disabled: Collection[str] = (),
    ):
        unknown = set(disabled) - set(FEATURES)
        if unknown:
            raise ValueError(f"unknown selection features: {sorted(unknown)}")
        self.cfg = cfg
        self.disabled = frozenset(disabled)
        d_w, d_h, d_c = cfg.d_w, cfg.d_h, cfg.d_c
        d_s = 2 * d_h
        self.embedding = pinit.uniform(rng, (vocab_size, d_w))
        self.common = pinit.uniform(rng, (2, cfg.d_common))
        self.q_encoder = pinit.bilstm(rng, d_w, d_h)
        self.base_encoder = pinit.bilstm(rng, d_w + cfg.d_common + 2 * d_h, d_h)
        self.W_begin = pinit.xavier(rng, d_s, d_c)
        self.W_end = pinit.xavier(rng, d_s, d_c)
        self.W_row = pinit.xavier(rng, d_c, d_c)
        self.W_col = pinit.xavier(rng, d_c, d_c)
        self.w_v = pinit.xavier(rng, d_c, 1)
        self.distance = pinit.uniform(rng, (cfg.n_buckets, cfg.d_dist))
        self.adv_encoder = pinit.bilstm(rng, 2 * d_s + cfg.d_dist + 2 * d_c, d_h)
        self.w_z = pinit.xavier(rng, 2 * d_h, 1)

    @property
    def params(self) -> dict[str, Tensor]:
        return {
            "embedding": self.embedding,
            "common": self.common,
            **pinit.bilstm_params("q_encoder", self.q_encoder),
            **pinit.bilstm_params("base_encoder", self.base_encoder),
            "W_begin": self.W_begin,
            "W_end": self.W_end,
            "W_row": self.W_row,
            "W_col": self.W_col,
            "w_v": self.w_v,
            "distance": self.distance,
            **pinit.bilstm_params("adv_encoder", self.adv_encoder),
            "w_z": self.w_z,
        }

    def _on(self, feature: str) -> bool:
        return feature not in self.disabled

    def question_condensed(
        self, question_ids: np.ndarray, dropout: float = 0.0, rng=None
    ) -> tuple[Tensor, Tensor]:
        """``(r_q, S_q)``: per-dimension max over the question's BiLSTM states."""
        if len(question_ids) == 0:
            raise ValueError("empty question")
        emb = ops.dropout(ops.take(self.embedding, question_ids), dropout, dropout > 0, rng)
        S_q = self.q_encoder([emb])[0]
        return ops.max(S_q, axis=0), S_q

    def passage_base_reps(
        self,
        passages: Sequence[Sequence[str]],
        question: Sequence[str],
        r_q: Tensor,
        vocab: Vocab,
        dropout: float = 0.0,
        rng=None,
    ) -> list[Tensor]:
        """``S_P`` for each passage: BiLSTM over [word; common-word; r_q] features."""
        rows = []
        for tokens in passages:
            n = len(tokens)
            word = ops.take(self.embedding, vocab.ids(tokens))
            if self._on("common_word"):
                cw = ops.take(self.common, common_word_ids(tokens, question))
            else:
                cw = Tensor(np.zeros((n, self.cfg.d_common)))
            if self._on("question"):
                rq = ops.broadcast_to(ops.reshape(r_q, (1, -1)), (n, r_q.shape[0]))
            else:
                rq = Tensor(np.zeros((n, r_q.shape[0])))
            rows.append(ops.dropout(ops.concat([word, cw, rq], axis=1), dropout, dropout > 0, rng))
        return self.base_encoder(rows)

    def candidate_reps(self, S: Sequence[Tensor], spans: Sequence[Span]) -> Tensor:
        """``r_C = tanh(W_b s_begin + W_e s_end)`` stacked to ``[M, d_c]``."""
        for s in spans:
            _check_span(s, S[s.passage].shape[0])
        begins = ops.stack([S[s.passage][s.begin] for s in spans])
        ends = ops.stack([S[s.passage][s.end] for s in spans])
        return ops.tanh(begins @ self.W_begin + ends @ self.W_end)

    def fuse(self, R: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Correlation matrix V, its off-diagonal row softmax A, and fused vectors ``A @ R``."""
        M, d_c = R.shape
        rows = ops.broadcast_to(ops.reshape(R @ self.W_row, (M, 1, d_c)), (M, M, d_c))
        cols = ops.broadcast_to(ops.reshape(R @ self.W_col, (1, M, d_c)), (M, M, d_c))
        hidden = ops.reshape(ops.tanh(rows + cols), (M * M, d_c))
        V = ops.reshape(hidden @ self.w_v, (M, M))
        if M == 1:
            return V, Tensor(np.zeros((1, 1))), Tensor(np.zeros((1, d_c)))
        A = ops.softmax_masked(V, ~np.eye(M, dtype=bool))
        return V, A, A @ R

    def advanced_rep(
        self,
        S_P: Tensor,
        span: Span,
        r_c: Tensor,
        r_fused: Tensor,
    ) -> Tensor:
        """Per-position features ``U_P`` for re-reading the candidate's passage."""
        n, d_s = S_P.shape
        _check_span(span, n)
        d_c = r_c.shape[0]
        feats = [S_P]
        if self._on("candidate_passage"):
            S_C = S_P[span.begin : span.end + 1]
            alpha = ops.softmax_masked(S_P @ S_C.T)
            feats.append(alpha @ S_C)
        else:
            feats.append(Tensor(np.zeros((n, d_s))))
        if self._on("distance"):
            buckets = signed_distances(n, span, self.cfg.max_dist) + self.cfg.max_dist
            feats.append(ops.take(self.distance, buckets))
        else:
            feats.append(Tensor(np.zeros((n, self.cfg.d_dist))))
        for name, vec in (("candidate_rep", r_c), ("fused", r_fused)):
            if self._on(name):
                feats.append(ops.broadcast_to(ops.reshape(vec, (1, d_c)), (n, d_c)))
            else:
                feats.append(Tensor(np.zeros((n, d_c))))
        return ops.concat(feats, axis=1)

    def forward(
        self,
        example: Example,
        spans: Sequence[Span],
        vocab: Vocab,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> SelectionOutput:
        if not spans:
            raise ValueError("selection needs at least one candidate")
        r_q, _ = self.question_condensed(vocab.ids(example.question), dropout, rng)
        used = sorted({s.passage for s in spans})
        reps = self.passage_base_reps(
            [example.passages[i] for i in used], example.question, r_q, vocab, dropout, rng
        )
        S = dict(zip(used, reps))
        R = self.candidate_reps(S, spans)
        V, A, R_fused = self.fuse(R)
        U = [
            ops.dropout(self.advanced_rep(S[s.passage], s, R[j], R_fused[j]), dropout, dropout > 0, rng)
            for j, s in enumerate(spans)
        ]
        F = self.adv_encoder(U)
        Z = ops.stack([ops.max(f, axis=0) for f in F])
        scores = ops.reshape(Z @ self.w_z, (len(spans),))
        return SelectionOutput(scores, ops.softmax_masked(scores), V.data.copy(), A.data.copy())


def gold_matches(example: Example, spans: Sequence[Span]) -> np.ndarray:
    """Boolean flags: candidate tokens equal some gold answer's tokens."""
    golds = [tokenize(a) for a in example.answers]
    return np.array(
        [list(example.passages[s.passage][s.begin : s.end + 1]) in golds for s in spans], dtype=bool
    )


def mle_select_loss(scores: Tensor, matches: np.ndarray) -> Tensor | None:
    """``-log sum_{C matches gold} p(C)``; None when no candidate matches."""
    idx = np.flatnonzero(matches)
    if idx.size == 0:
        return None
    return ops.logsumexp(scores) - ops.logsumexp(ops.take(scores, idx))


def dump_attention(path: str | Path, example: Example, spans: Sequence[Span], attention: np.ndarray) -> None:
    """Write the candidate attention map as CSV with candidate labels on both axes."""
    labels = [f"P{s.passage}:{span_text(example, s)}" for s in spans]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + labels)
        for label, row in zip(labels, attention):
            w.writerow([label] + [repr(float(x)) for x in row])
