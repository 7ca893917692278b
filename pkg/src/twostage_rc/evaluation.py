"""Exact-match / F1 evaluation of the two-stage pipeline."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import Example, tokenize
from .extraction import CandidateSet, Span, build_candidate_set, span_text
from .gradcore import no_grad
from .rl.reward import best_f1, exact_match
from .state import TrainState

ABSTAIN = None


@dataclass
class Record:
    id: str
    prediction: str | None
    f1: float
    em: bool


@dataclass
class EvalReport:
    em: float
    f1: float
    n: int
    records: list[Record] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"em": self.em, "f1": self.f1, "n": self.n, "records": [asdict(r) for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write(self, stem: str | Path) -> None:
        """Write ``<stem>.json`` and ``<stem>.csv`` (per-example rows)."""
        stem = Path(stem)
        stem.with_suffix(".json").write_text(self.to_json() + "\n", encoding="utf-8")
        with open(stem.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "prediction", "f1", "em"])
            for r in self.records:
                w.writerow([r.id, "" if r.prediction is None else r.prediction, repr(r.f1), int(r.em)])


def top_k_candidates(state: TrainState, example: Example, K: int | None = None) -> CandidateSet:
    cfg = state.train_cfg
    with no_grad():
        dists = state.extraction.distributions(example, state.vocab, cfg.L_max)
        return build_candidate_set(dists, K or cfg.K, "top-k")


def select(state: TrainState, example: Example, cset: CandidateSet) -> tuple[Span, np.ndarray]:
    """Argmax candidate (first in (passage, begin, end) order on ties) and the probabilities."""
    with no_grad():
        out = state.selection.forward(example, cset.spans, state.vocab)
    probs = out.probs.data
    return cset.spans[int(np.argmax(probs))], probs


def predict(state: TrainState, example: Example, K: int | None = None, cset: CandidateSet | None = None) -> str | None:
    """Top-K extraction per passage, then the selection argmax; None means abstain."""
    try:
        cset = cset or top_k_candidates(state, example, K)
    except ValueError:
        return ABSTAIN
    if not len(cset):
        return ABSTAIN
    span, _ = select(state, example, cset)
    return span_text(example, span)


def predict_extraction_only(state: TrainState, example: Example) -> str | None:
    """Most probable single span over all passages (each passage normalized on its own)."""
    with no_grad():
        dists = state.extraction.distributions(example, state.vocab, state.train_cfg.L_max)
    best, best_lp = None, -np.inf
    for dist in dists:
        lp = dist.log_probs()
        i = int(np.argmax(lp))
        if lp[i] > best_lp:
            best, best_lp = Span(dist.passage, int(dist.begins[i]), int(dist.ends[i])), lp[i]
    return None if best is None else span_text(example, best)


def score(examples: Sequence[Example], predictions: Sequence[str | None]) -> EvalReport:
    records = []
    for ex, pred in zip(examples, predictions):
        golds = [tokenize(a) for a in ex.answers]
        if pred is None:
            records.append(Record(ex.id, None, 0.0, False))
            continue
        toks = tokenize(pred)
        records.append(Record(ex.id, pred, best_f1(toks, golds), exact_match(toks, golds)))
    n = len(records)
    em = 100.0 * sum(r.em for r in records) / n if n else 0.0
    f1 = 100.0 * sum(r.f1 for r in records) / n if n else 0.0
    return EvalReport(em, f1, n, records)


def evaluate(
    examples: Sequence[Example],
    state: TrainState,
    K: int | None = None,
    jobs: int = 1,
    predictor: Callable[[TrainState, Example], str | None] | None = None,
) -> EvalReport:
    """EM = % exact token matches with any gold; F1 = mean best-gold token F1 (percent)."""
    fn = predictor or (lambda s, ex: predict(s, ex, K))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            preds = list(pool.map(lambda ex: fn(state, ex), examples))
    else:
        preds = [fn(state, ex) for ex in examples]
    return score(examples, preds)
