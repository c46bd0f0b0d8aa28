from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from src.config.settings import out_dir
from src.datagen.generator import GenSpec
from src.errors import ConfigError
from src.pu.priors import PriorSettings, Variant


class TrainConfig(BaseModel):
    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=64, ge=2)
    learning_rate: float = Field(default=1e-3, gt=0)
    warmup_fraction: float = Field(default=0.06, ge=0, lt=1)
    seed: int = 62
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    hidden_dims: List[int] = Field(default_factory=lambda: [64, 64])
    embed_dim: int = Field(default=32, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=0)
    log_every: int = Field(default=50, ge=1)
    priors: PriorSettings = Field(default_factory=PriorSettings)

    @property
    def variant(self) -> Variant:
        return self.priors.variant

    def dims(self, d_in: int) -> list[int]:
        return [d_in, *self.hidden_dims, self.embed_dim]

    def with_overrides(
        self,
        seed: Optional[int] = None,
        variant: Optional[Variant] = None,
        multiplier: Optional[float] = None,
        **prior_fields: float,
    ) -> "TrainConfig":
        priors = self.priors.model_copy(
            update={
                k: v
                for k, v in {"variant": variant, "multiplier": multiplier, **prior_fields}.items()
                if v is not None
            }
        )
        update: dict[str, object] = {"priors": priors}
        if seed is not None:
            update["seed"] = seed
        return self.model_copy(update=update)


class SweepSettings(BaseModel):
    multipliers: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [62, 63, 64, 65, 66], min_length=1)


class GradCheckSettings(BaseModel):
    instances: int = Field(default=3, ge=1)
    batch_size: int = Field(default=6, ge=2, le=8)
    d_in: int = Field(default=6, ge=1, le=16)
    hidden_dims: List[int] = Field(default_factory=lambda: [8])
    embed_dim: int = Field(default=5, ge=2, le=16)
    num_classes: int = Field(default=3, ge=1, le=4)
    epsilon: float = Field(default=1e-6, gt=0)
    tolerance: float = Field(default=1e-6, gt=0)
    seed: int = 62


class ExperimentConfig(BaseModel):
    gen: GenSpec = Field(default_factory=GenSpec)
    n_test: int = Field(default=5000, ge=1)
    test_seed: int = 1062
    train: TrainConfig = Field(default_factory=TrainConfig)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    grad_check: GradCheckSettings = Field(default_factory=GradCheckSettings)
    out_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_seeds(self) -> "ExperimentConfig":
        if self.test_seed == self.gen.seed:
            raise ValueError("test_seed must differ from gen.seed")
        return self

    def test_spec(self) -> GenSpec:
        """Same class geometry as ``gen``; only the size and the sample seed change."""
        return self.gen.model_copy(update={"n": self.n_test, "seed": self.test_seed})

    def output_dir(self) -> Path:
        return Path(self.out_dir) if self.out_dir else out_dir()


class ClassTermRecord(BaseModel):
    index: int
    positive: float
    unlabeled: float
    correction: float
    clamped: bool
    mixup: float
    skipped: bool


class StepRecord(BaseModel):
    step: int
    epoch: int
    lr: float
    mu: Optional[float]
    l_pm_or_p2m: float
    l_pmix: float
    l_total: float
    clamp_fraction: float
    mixup_empty: bool
    classes: List[ClassTermRecord]


class ClassCounts(BaseModel):
    index: int
    tp: int
    fp: int
    fn: int


class MetricsReport(BaseModel):
    precision: float
    recall: float
    f1: float
    per_class: List[ClassCounts]
    reference: Literal["truth", "observed"] = "truth"
    variant: Optional[Variant] = None
    multiplier: Optional[float] = None
    steps: int = 0
    clamp_frequency: Optional[float] = None
    final_loss: Optional[float] = None
    step_log: List[StepRecord] = Field(default_factory=list, exclude=True)


def _preset_default() -> ExperimentConfig:
    return ExperimentConfig()


def _preset_extreme() -> ExperimentConfig:
    config = ExperimentConfig()
    config.gen = config.gen.model_copy(update={"erasure": [0.9] * config.gen.num_classes})
    config.train = config.train.with_overrides(multiplier=12.0)
    return config


def _preset_supervised() -> ExperimentConfig:
    config = ExperimentConfig()
    config.gen = config.gen.model_copy(update={"erasure": [0.0] * config.gen.num_classes})
    config.train = config.train.with_overrides(multiplier=1.0, nu=0.01, dropout_rate=0.1)
    return config


PRESETS = {
    "default": _preset_default,
    "extreme": _preset_extreme,
    "supervised": _preset_supervised,
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})") from None


def describe_validation_error(exc: ValidationError) -> str:
    first = exc.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"{field}: {first['msg']}"


def load_config(path: Optional[str | Path]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {describe_validation_error(exc)}") from exc
