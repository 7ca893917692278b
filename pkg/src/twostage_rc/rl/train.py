"""MLE pretraining of both stages and joint policy-gradient fine-tuning."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from ..data import Example
from .. import evaluation as ev
from ..extraction import candidate_dump, mle_extract_loss
from ..gradcore import RMSProp, backward, ops
from ..selection import gold_matches, mle_select_loss
from ..state import TrainState, derive_rng
from .objective import reinforce_step

log = logging.getLogger(__name__)

PHASES = ("extract", "select")


class Reporter:
    """Collects step reports and mirrors them as JSON lines when a stream is given."""

    def __init__(self, stream: TextIO | None = None):
        self.stream = stream
        self.rows: list[dict] = []

    def emit(self, row: dict) -> None:
        self.rows.append(row)
        if self.stream is not None:
            self.stream.write(json.dumps(row, sort_keys=True) + "\n")
            self.stream.flush()


def batches(examples: Sequence[Example], size: int, rng: np.random.Generator) -> list[list[Example]]:
    order = rng.permutation(len(examples))
    return [[examples[int(i)] for i in order[k : k + size]] for k in range(0, len(order), size)]


def _optimizer(state: TrainState, prefix: str, lr: float) -> RMSProp:
    params = {k: v for k, v in state.params().items() if k.startswith(prefix)}
    return RMSProp(params, lr)


def _mean_step(losses: list, opt: RMSProp) -> float | None:
    if not losses:
        return None
    loss = ops.mean(ops.stack(losses))
    opt.zero_grad()
    backward(loss)
    opt.step()
    return loss.item()


class _Keeper:
    """Tracks the best dev EM snapshot and the patience counter."""

    def __init__(self, state: TrainState, patience: int):
        self.state = state
        self.patience = patience
        self.best_em = -1.0
        self.best_report: ev.EvalReport | None = None
        self.snapshot = state.snapshot()
        self.bad = 0

    def update(self, report: ev.EvalReport) -> bool:
        """Record an evaluation; returns False once patience runs out."""
        if report.em > self.best_em:
            self.best_em, self.best_report = report.em, report
            self.snapshot = self.state.snapshot()
            self.bad = 0
        else:
            self.bad += 1
        return self.bad < self.patience

    def finish(self, phase: str, opt: RMSProp, out_dir: Path | None) -> TrainState:
        state = self.state
        state.restore(self.snapshot)
        state.phase = phase
        state.optimizer = opt.state_dict()
        if self.best_report is not None:
            state.best = {"phase": phase, "dev_em": self.best_report.em, "dev_f1": self.best_report.f1}
        if out_dir is not None:
            state.save(Path(out_dir) / f"{phase}.ckpt.json")
        return state


def pretrain_extract(
    train: Sequence[Example],
    dev: Sequence[Example],
    state: TrainState,
    out_dir: str | Path | None = None,
    reporter: Reporter | None = None,
) -> TrainState:
    """Maximize the log-likelihood of gold spans in passages that contain them."""
    cfg = state.train_cfg
    reporter = reporter or Reporter()
    opt = _optimizer(state, "extraction/", cfg.lr_pretrain)
    keeper = _Keeper(state, cfg.patience)
    for epoch in range(cfg.epochs_extract if train else 0):
        losses_seen = []
        for batch in batches(train, cfg.batch_extract, derive_rng(cfg.seed, "extract", epoch)):
            losses = []
            for ex in batch:
                rng = derive_rng(cfg.seed, "extract", ex.id, state.step)
                loss = mle_extract_loss(ex, state.extraction, state.vocab, cfg.L_max, cfg.dropout, rng)
                if loss is not None:
                    losses.append(loss)
            value = _mean_step(losses, opt)
            state.step += 1
            if value is not None:
                losses_seen.append(value)
        report = ev.evaluate(dev, state, predictor=ev.predict_extraction_only)
        reporter.emit(_row(state, "pretrain-extract", losses_seen, None, report, epoch))
        if not keeper.update(report):
            break
    return keeper.finish("extract", opt, Path(out_dir) if out_dir else None)


def pretrain_select(
    train: Sequence[Example],
    dev: Sequence[Example],
    state: TrainState,
    out_dir: str | Path | None = None,
    reporter: Reporter | None = None,
) -> TrainState:
    """Maximize the probability of gold-matching candidates among the extractor's top-K."""
    cfg = state.train_cfg
    reporter = reporter or Reporter()
    train_c = [ev.top_k_candidates(state, ex) for ex in train]
    dev_c = [ev.top_k_candidates(state, ex) for ex in dev]
    if out_dir is not None:
        with open(Path(out_dir) / "candidates_train.jsonl", "w", encoding="utf-8") as fh:
            for ex, cs in zip(train, train_c):
                fh.write(json.dumps(candidate_dump(ex, cs), sort_keys=True) + "\n")
    items = [(ex, cs) for ex, cs in zip(train, train_c) if gold_matches(ex, cs.spans).any()]
    opt = _optimizer(state, "selection/", cfg.lr_pretrain)
    keeper = _Keeper(state, cfg.patience)
    dev_predict = _cached_predictor(dev, dev_c)
    for epoch in range(cfg.epochs_select if items else 0):
        losses_seen = []
        for batch in batches(items, cfg.batch_select, derive_rng(cfg.seed, "select", epoch)):
            losses = []
            for ex, cs in batch:
                rng = derive_rng(cfg.seed, "select", ex.id, state.step)
                out = state.selection.forward(ex, cs.spans, state.vocab, cfg.dropout, rng)
                loss = mle_select_loss(out.scores, gold_matches(ex, cs.spans))
                if loss is not None:
                    losses.append(loss)
            value = _mean_step(losses, opt)
            state.step += 1
            if value is not None:
                losses_seen.append(value)
        report = ev.evaluate(dev, state, predictor=dev_predict)
        reporter.emit(_row(state, "pretrain-select", losses_seen, None, report, epoch))
        if not keeper.update(report):
            break
    return keeper.finish("select", opt, Path(out_dir) if out_dir else None)


def pretrain(
    phase: str,
    train: Sequence[Example],
    dev: Sequence[Example],
    state: TrainState,
    out_dir: str | Path | None = None,
    reporter: Reporter | None = None,
) -> TrainState:
    if phase == "extract":
        return pretrain_extract(train, dev, state, out_dir, reporter)
    if phase == "select":
        return pretrain_select(train, dev, state, out_dir, reporter)
    raise ValueError(f"unknown pretraining phase {phase!r}; expected one of {PHASES}")


def joint_train(
    train: Sequence[Example],
    dev: Sequence[Example],
    state: TrainState,
    out_dir: str | Path | None = None,
    reporter: Reporter | None = None,
) -> TrainState:
    """REINFORCE over sampled candidate sets, updating both stages together."""
    cfg = state.train_cfg
    reporter = reporter or Reporter()
    opt = _optimizer(state, "", cfg.lr_rl)
    keeper = _Keeper(state, cfg.patience)
    keeper.update(ev.evaluate(dev, state))
    baseline = 0.0
    since_eval, window = 0, []
    stop = False
    for epoch in range(cfg.epochs_rl if train else 0):
        for batch in batches(train, cfg.batch_rl, derive_rng(cfg.seed, "rl", epoch)):
            row = reinforce_step(batch, state, opt, baseline if cfg.baseline else 0.0)
            if cfg.baseline:
                baseline = cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * row["mean_reward"]
            window.append(row["mean_reward"])
            reporter.emit(
                {"step": state.step, "phase": "train-joint", "loss": row["loss"], "mean_reward": row["mean_reward"]}
            )
            since_eval += 1
            if cfg.eval_every and since_eval >= cfg.eval_every:
                since_eval = 0
                stop = not _joint_eval(state, dev, keeper, reporter, window, epoch)
                window = []
                if stop:
                    break
        if stop:
            break
        if not cfg.eval_every:
            if not _joint_eval(state, dev, keeper, reporter, window, epoch):
                break
            window = []
    return keeper.finish("joint", opt, Path(out_dir) if out_dir else None)


def _joint_eval(state, dev, keeper, reporter, window, epoch) -> bool:
    report = ev.evaluate(dev, state)
    row = {
        "step": state.step,
        "phase": "train-joint",
        "epoch": epoch,
        "loss": None,
        "mean_reward": float(np.mean(window)) if window else None,
        "dev_em": report.em,
        "dev_f1": report.f1,
    }
    reporter.emit(row)
    log.info("joint step %d: dev EM %.1f F1 %.1f", state.step, report.em, report.f1)
    return keeper.update(report)


def _cached_predictor(examples: Sequence[Example], csets) -> Callable:
    by_id = {ex.id: cs for ex, cs in zip(examples, csets)}
    return lambda state, ex: ev.predict(state, ex, cset=by_id[ex.id])


def _row(state, phase, losses, mean_reward, report: ev.EvalReport, epoch) -> dict:
    row = {
        "step": state.step,
        "phase": phase,
        "epoch": epoch,
        "loss": float(np.mean(losses)) if losses else None,
        "mean_reward": mean_reward,
        "dev_em": report.em,
        "dev_f1": report.f1,
    }
    log.info("%s epoch %d: loss %s dev EM %.1f F1 %.1f", phase, epoch, row["loss"], report.em, report.f1)
    return row
