"""Model dimensions, training hyperparameters and selection-feature toggles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .data import ConfigError

FEATURES = (
    "question",
    "common_word",
    "candidate_rep",
    "distance",
    "candidate_passage",
    "fused",
)

FEATURE_LABELS = {
    "question": "-question representation",
    "common_word": "-question and passage common words",
    "candidate_rep": "-candidate independent representation",
    "distance": "-candidate related distance feature",
    "candidate_passage": "-candidate dependent passage representation",
    "fused": "-candidates fused representation",
}


@dataclass
class ModelConfig:
    d_w: int = 64
    d_h: int = 100
    d_c: int = 100
    d_common: int = 4
    d_dist: int = 50
    max_dist: int = 20

    @property
    def n_buckets(self) -> int:
        return 2 * self.max_dist + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})


@dataclass
class TrainConfig:
    K: int = 2
    L_max: int = 8
    batch_extract: int = 30
    batch_select: int = 20
    batch_rl: int = 5
    lr_pretrain: float = 2e-3
    lr_rl: float = 1e-4
    dropout: float = 0.1
    epochs_extract: int = 10
    epochs_select: int = 10
    epochs_rl: int = 5
    patience: int = 3
    eval_every: int = 0  # RL steps between dev evaluations; 0 means once per epoch
    baseline: bool = False
    baseline_decay: float = 0.9
    enum_budget: int = 4096
    seed: int = 0
    disabled: tuple[str, ...] = field(default_factory=tuple)

    def validate(self) -> None:
        if self.K not in (1, 2, 3):
            raise ConfigError(f"K must be 1, 2 or 3, got {self.K}")
        if self.L_max < 1:
            raise ConfigError("L_max must be positive")
        for name in ("batch_extract", "batch_select", "batch_rl"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        unknown = set(self.disabled) - set(FEATURES)
        if unknown:
            raise ConfigError(f"unknown selection features: {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["disabled"] = list(self.disabled)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        kw = {f.name: d[f.name] for f in fields(cls) if f.name in d}
        if "disabled" in kw:
            kw["disabled"] = tuple(kw["disabled"])
        return cls(**kw)
