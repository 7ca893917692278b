"""Everything needed to resume or evaluate a run: vocab, both models, optimizer, counters."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import ModelConfig, TrainConfig
from .data import Vocab
from .extraction import ExtractionModel
from .gradcore import Tensor
from .gradcore import checkpoint as ckpt
from .selection import SelectionModel


def derive_rng(seed: int, *keys: Any) -> np.random.Generator:
    """Independent stream per (seed, keys...); string keys are hashed with CRC32."""
    words = [int(seed)]
    for k in keys:
        words.append(zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k))
    return np.random.default_rng(words)


@dataclass
class TrainState:
    vocab: Vocab
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    extraction: ExtractionModel
    selection: SelectionModel
    step: int = 0
    phase: str = "init"
    optimizer: dict | None = None
    best: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, vocab: Vocab, model_cfg: ModelConfig, train_cfg: TrainConfig) -> TrainState:
        train_cfg.validate()
        ext = ExtractionModel(len(vocab), model_cfg, derive_rng(train_cfg.seed, "init", "extraction"))
        sel = SelectionModel(
            len(vocab), model_cfg, derive_rng(train_cfg.seed, "init", "selection"), train_cfg.disabled
        )
        return cls(vocab, model_cfg, train_cfg, ext, sel)

    def reset_selection(self, disabled=None) -> None:
        """Re-initialize the selection model (same seed), optionally with other ablations."""
        if disabled is not None:
            self.train_cfg.disabled = tuple(disabled)
        self.selection = SelectionModel(
            len(self.vocab),
            self.model_cfg,
            derive_rng(self.train_cfg.seed, "init", "selection"),
            self.train_cfg.disabled,
        )

    def params(self) -> dict[str, Tensor]:
        out = {f"extraction/{k}": v for k, v in self.extraction.params.items()}
        out.update({f"selection/{k}": v for k, v in self.selection.params.items()})
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        params = self.params()
        for k, v in snap.items():
            params[k].data[...] = v

    def copy(self) -> TrainState:
        other = TrainState.fresh(self.vocab, self.model_cfg, TrainConfig.from_dict(self.train_cfg.to_dict()))
        other.restore(self.snapshot())
        other.step, other.phase, other.best = self.step, self.phase, dict(self.best)
        other.optimizer = self.optimizer
        return other

    def dumps(self) -> str:
        return ckpt.dumps(
            self.params(),
            optimizer=self.optimizer,
            rng_state={"seed": self.train_cfg.seed, "step": self.step},
            extra={
                "vocab": self.vocab.to_list(),
                "model_config": self.model_cfg.to_dict(),
                "train_config": self.train_cfg.to_dict(),
                "phase": self.phase,
                "step": self.step,
                "best": self.best,
            },
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> TrainState:
        doc = ckpt.load(path)
        vocab = Vocab.from_list(doc["vocab"])
        state = cls.fresh(
            vocab, ModelConfig.from_dict(doc["model_config"]), TrainConfig.from_dict(doc["train_config"])
        )
        params = state.params()
        missing = set(params) - set(doc["params"])
        if missing:
            raise ckpt.CheckpointError(f"checkpoint lacks parameters: {sorted(missing)[:3]}")
        for k, v in doc["params"].items():
            if k not in params or params[k].shape != v.shape:
                raise ckpt.CheckpointError(f"parameter {k} does not match the model")
            params[k].data[...] = v
        state.step = doc.get("step", 0)
        state.phase = doc.get("phase", "init")
        state.best = doc.get("best", {})
        state.optimizer = doc.get("optimizer")
        return state
