"""Candidate extraction: passage encoding, span distributions and candidate sets.

Matrices are stored position-major: a passage encoding is ``[l_P, d]`` with
one row per token, and linear maps are ``[d_in, d_out]`` acting on rows.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .config import ModelConfig
from .data import Example, Vocab, detokenize, find_occurrences, tokenize
from .gradcore import Tensor, ops
from .gradcore import init as pinit


class InputError(ValueError):
    pass


class DegeneratePassageError(ValueError):
    pass


class Span(NamedTuple):
    passage: int
    begin: int
    end: int


def span_mask(length: int, L_max: int) -> np.ndarray:
    """``mask[k, t]`` is True for spans ``k <= t < k + L_max``."""
    k = np.arange(length)[:, None]
    t = np.arange(length)[None, :]
    return (t >= k) & (t - k < L_max)


class SpanDistribution:
    """Normalized log-probabilities of every valid span of one passage."""

    def __init__(self, logp: Tensor, mask: np.ndarray, passage: int = 0):
        self.logp = logp
        self.mask = mask
        self.passage = passage
        ks, ts = np.nonzero(mask)
        self.begins, self.ends = ks, ts
        self._flat = np.ravel_multi_index((ks, ts), mask.shape)

    @property
    def length(self) -> int:
        return self.mask.shape[0]

    def __len__(self) -> int:
        return len(self.begins)

    def spans(self) -> list[Span]:
        return [Span(self.passage, int(k), int(t)) for k, t in zip(self.begins, self.ends)]

    def log_probs(self) -> np.ndarray:
        return self.logp.data[self.begins, self.ends]

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def index(self, span: Span | tuple[int, int]) -> int:
        b, e = (span.begin, span.end) if isinstance(span, Span) else span
        if not (0 <= b < self.length and 0 <= e < self.length and self.mask[b, e]):
            raise InputError(f"span ({b}, {e}) is not valid in a passage of length {self.length}")
        return int(np.searchsorted(self._flat, b * self.length + e))

    def span_logp(self, spans: Sequence[Span | tuple[int, int]]) -> Tensor:
        """Differentiable log-probabilities of the given spans, shape ``[len(spans)]``."""
        flat = [self._flat[self.index(s)] for s in spans]
        return ops.take(ops.reshape(self.logp, (-1,)), flat)


def span_distribution(b: Tensor, e: Tensor, L_max: int, passage: int = 0) -> SpanDistribution:
    """``log p(k, t) = b_k + e_t - logsumexp`` over spans with ``k <= t < k + L_max``."""
    n = b.shape[0]
    if n == 0:
        raise InputError("empty passage")
    scores = ops.broadcast_to(ops.reshape(b, (n, 1)), (n, n)) + ops.broadcast_to(
        ops.reshape(e, (1, n)), (n, n)
    )
    mask = span_mask(n, L_max)
    return SpanDistribution(ops.log_softmax_masked(scores, mask), mask, passage)


def top_k_spans(dist: SpanDistribution, K: int) -> list[Span]:
    """The K most probable spans; ties go to the smaller begin, then the smaller end."""
    if len(dist) < K:
        raise DegeneratePassageError(f"passage has {len(dist)} valid spans, {K} requested")
    lp = dist.log_probs()
    order = np.lexsort((dist.ends, dist.begins, -lp))[:K]
    return [Span(dist.passage, int(dist.begins[i]), int(dist.ends[i])) for i in order]


def sample_without_replacement(probs: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """Draw ``k`` distinct indices one at a time, renormalizing over what is left.

    Uses the Gumbel-top-k form: sorting ``log p + Gumbel noise`` in decreasing
    order yields exactly the sequential draw order, in one vectorized call.
    """
    p = np.asarray(probs, dtype=np.float64)
    if k > len(p):
        raise DegeneratePassageError(f"cannot draw {k} items from {len(p)}")
    with np.errstate(divide="ignore"):
        keys = np.log(p) + rng.gumbel(size=len(p))
    return [int(i) for i in np.argsort(-keys, kind="stable")[:k]]


def sample_k_without_replacement(dist: SpanDistribution, K: int, rng: np.random.Generator) -> list[Span]:
    """K distinct spans drawn sequentially; returned sorted, draw order discarded."""
    if K > len(dist):
        raise DegeneratePassageError(f"passage has {len(dist)} valid spans, {K} requested")
    idx = sorted(sample_without_replacement(dist.probs(), K, rng))
    return [Span(dist.passage, int(dist.begins[i]), int(dist.ends[i])) for i in idx]


def unordered_set_log_prob(logp: Tensor) -> Tensor:
    """log P(set) for items drawn without replacement, given their ``[k]`` log-probs.

    Sums the sequential draw probability over all k! orders.
    """
    k = logp.shape[0]
    p = ops.exp(logp)
    items = [p[i] for i in range(k)]
    total = None
    for order in itertools.permutations(range(k)):
        term = items[order[0]]
        drawn = items[order[0]]
        for j in order[1:]:
            term = term * items[j] / (1.0 - drawn)
            drawn = drawn + items[j]
        total = term if total is None else total + term
    return ops.log(total)


def set_log_prob(
    chosen: Sequence[Sequence[Span]], dists: Sequence[SpanDistribution]
) -> Tensor:
    """log p of a whole candidate set: product over passages of unordered-set probabilities."""
    parts = []
    for spans, dist in zip(chosen, dists):
        keys = {(s.begin, s.end) for s in spans}
        if len(keys) != len(spans):
            raise InputError(f"duplicate span in passage {dist.passage}")
        if not spans:
            continue
        parts.append(unordered_set_log_prob(dist.span_logp(spans)))
    if not parts:
        return Tensor(0.0)
    return ops.sum(ops.stack(parts))


@dataclass
class CandidateSet:
    """M candidate spans for one question, sorted by (passage, begin, end)."""

    spans: list[Span]
    span_logp: np.ndarray
    set_logp: Tensor
    provenance: str  # "top-k" or "sampled"

    def __len__(self) -> int:
        return len(self.spans)

    def by_passage(self, n_passages: int) -> list[list[Span]]:
        out: list[list[Span]] = [[] for _ in range(n_passages)]
        for s in self.spans:
            out[s.passage].append(s)
        return out


def span_text(example: Example, span: Span) -> str:
    return detokenize(example.passages[span.passage][span.begin : span.end + 1])


def build_candidate_set(
    dists: Sequence[SpanDistribution],
    K: int,
    mode: str = "top-k",
    rng: np.random.Generator | None = None,
) -> CandidateSet:
    """K spans per passage (all of them if a passage has fewer than K)."""
    chosen = []
    for dist in dists:
        k = min(K, len(dist))
        if mode == "top-k":
            chosen.append(top_k_spans(dist, k))
        elif mode == "sampled":
            chosen.append(sample_k_without_replacement(dist, k, rng))
        else:
            raise ValueError(f"unknown candidate mode {mode!r}")
    spans = sorted(s for group in chosen for s in group)
    lp = np.array([dists[s.passage].log_probs()[dists[s.passage].index(s)] for s in spans])
    return CandidateSet(spans, lp, set_log_prob(chosen, dists), mode)


def candidate_dump(example: Example, cset: CandidateSet) -> dict:
    return {
        "id": example.id,
        "candidates": [
            {
                "passage": s.passage,
                "begin": s.begin,
                "end": s.end,
                "logp": float(lp),
                "text": span_text(example, s),
            }
            for s, lp in zip(cset.spans, cset.span_logp)
        ],
    }


class ExtractionModel:
    """Shared BiLSTM over question and passages, question attention, fusion BiLSTM, span scorers."""

    def __init__(self, vocab_size: int, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        d_w, d_h = cfg.d_w, cfg.d_h
        self.embedding = pinit.uniform(rng, (vocab_size, d_w))
        self.encoder = pinit.bilstm(rng, d_w, d_h)
        self.fusion = pinit.bilstm(rng, 4 * d_h, d_h)
        self.w_begin = pinit.xavier(rng, 2 * d_h, 1)
        self.w_end = pinit.xavier(rng, 2 * d_h, 1)

    @property
    def params(self) -> dict[str, Tensor]:
        return {
            "embedding": self.embedding,
            **pinit.bilstm_params("encoder", self.encoder),
            **pinit.bilstm_params("fusion", self.fusion),
            "w_begin": self.w_begin,
            "w_end": self.w_end,
        }

    def encode(
        self,
        question_ids: np.ndarray,
        passage_ids: Sequence[np.ndarray],
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> tuple[list[Tensor], list[Tensor]]:
        """Per-passage final representations ``[l_P, 2 d_h]`` and question attention ``[l_P, l_Q]``."""
        if len(question_ids) == 0 or any(len(p) == 0 for p in passage_ids):
            raise InputError("question and passages must be non-empty")
        training = dropout > 0.0
        embs = [
            ops.dropout(ops.take(self.embedding, ids), dropout, training, rng)
            for ids in [question_ids, *passage_ids]
        ]
        H = self.encoder(embs)
        HQ, HPs = H[0], H[1:]
        HQ_T = HQ.T
        fused_in, alphas = [], []
        for HP in HPs:
            alpha = ops.softmax_masked(HP @ HQ_T)
            fused_in.append(ops.dropout(ops.concat([HP, alpha @ HQ], axis=1), dropout, training, rng))
            alphas.append(alpha)
        return self.fusion(fused_in), alphas

    def distributions(
        self,
        example: Example,
        vocab: Vocab,
        L_max: int,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> list[SpanDistribution]:
        G, _ = self.encode(vocab.ids(example.question), [vocab.ids(p) for p in example.passages], dropout, rng)
        out = []
        for i, g in enumerate(G):
            n = g.shape[0]
            b = ops.reshape(g @ self.w_begin, (n,))
            e = ops.reshape(g @ self.w_end, (n,))
            out.append(span_distribution(b, e, L_max, passage=i))
        return out


def gold_spans(example: Example, L_max: int) -> list[list[tuple[int, int]]]:
    """Per passage, every occurrence of any gold answer that fits within ``L_max`` tokens."""
    golds = [tokenize(a) for a in example.answers]
    out = []
    for passage in example.passages:
        found = set()
        for g in golds:
            found.update(o for o in find_occurrences(passage, g) if o[1] - o[0] < L_max)
        out.append(sorted(found))
    return out


def mle_extract_loss(
    example: Example,
    model: ExtractionModel,
    vocab: Vocab,
    L_max: int,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor | None:
    """Mean negative log-likelihood of gold spans, or None when no passage holds a gold answer."""
    occ = gold_spans(example, L_max)
    keep = [i for i, o in enumerate(occ) if o]
    if not keep:
        return None
    sub = Example(example.id, example.question, example.answers, [example.passages[i] for i in keep])
    dists = model.distributions(sub, vocab, L_max, dropout, rng)
    terms = [dist.span_logp(occ[i]) for dist, i in zip(dists, keep)]
    nll = ops.sum(ops.concat(terms))
    return ops.mul(nll, -1.0 / sum(len(occ[i]) for i in keep))
