"""Ablation and K-sweep drivers and their CSV tables."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from . import evaluation as ev
from .config import FEATURE_LABELS, FEATURES, ModelConfig, TrainConfig
from .data import ConfigError, Example, Vocab
from .rl.train import Reporter, joint_train, pretrain_extract, pretrain_select
from .state import TrainState

log = logging.getLogger(__name__)

BASE = "base"
TABLE_COLUMNS = ("variant", "em", "f1", "n", "seed")


@dataclass
class Row:
    variant: str
    report: ev.EvalReport
    seed: int


def write_table(path: str | Path, rows: Sequence[Row]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow([r.variant, repr(r.report.em), repr(r.report.f1), r.report.n, r.seed])


def read_table(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run_pipeline(
    train: Sequence[Example],
    dev: Sequence[Example],
    vocab: Vocab,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: str | Path | None = None,
    reporter: Reporter | None = None,
) -> TrainState:
    """Fresh state, then extraction pretraining, selection pretraining and joint RL."""
    state = TrainState.fresh(vocab, model_cfg, train_cfg)
    pretrain_extract(train, dev, state, out_dir, reporter)
    pretrain_select(train, dev, state, out_dir, reporter)
    if train_cfg.epochs_rl:
        joint_train(train, dev, state, out_dir, reporter)
    return state


def run_ablation(
    train: Sequence[Example],
    dev: Sequence[Example],
    extracted: TrainState,
    features: Sequence[str | None] = (None, *FEATURES),
    out_path: str | Path | None = None,
) -> list[Row]:
    """Retrain the selection stage once per disabled feature on top of ``extracted``.

    ``extracted`` is left untouched; each variant starts from a copy with a
    freshly initialized selection model. ``None`` means nothing disabled.
    """
    unknown = [f for f in features if f is not None and f not in FEATURES]
    if unknown:
        raise ConfigError(f"unknown selection features: {unknown}")
    rows = []
    for feature in features:
        state = extracted.copy()
        state.reset_selection(() if feature is None else (feature,))
        pretrain_select(train, dev, state)
        report = ev.evaluate(dev, state)
        label = BASE if feature is None else FEATURE_LABELS[feature]
        log.info("ablation %s: EM %.1f F1 %.1f", label, report.em, report.f1)
        rows.append(Row(label, report, state.train_cfg.seed))
    if out_path is not None:
        write_table(out_path, rows)
    return rows


def run_k_sweep(
    train: Sequence[Example],
    dev: Sequence[Example],
    vocab: Vocab,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    Ks: Sequence[int] = (1, 2, 3),
    out_path: str | Path | None = None,
) -> list[Row]:
    """Full train and dev evaluation per K; every other setting is shared."""
    bad = [k for k in Ks if k not in (1, 2, 3)]
    if bad:
        raise ConfigError(f"K must be 1, 2 or 3, got {bad}")
    rows = []
    for K in Ks:
        cfg = replace(train_cfg, K=int(K))
        state = run_pipeline(train, dev, vocab, model_cfg, cfg)
        report = ev.evaluate(dev, state)
        log.info("K=%d: EM %.1f F1 %.1f", K, report.em, report.f1)
        rows.append(Row(f"K={K}", report, cfg.seed))
    if out_path is not None:
        write_table(out_path, rows)
    return rows
