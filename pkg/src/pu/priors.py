from __future__ import annotations

from enum import Enum

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.datagen.generator import PuDataset
from src.errors import ConfigError, PriorDomainError, UsageError

DEFAULT_LAMBDA = 10.0
DEFAULT_ALPHA = 1.0
DEFAULT_NU = 0.05
DEFAULT_DROPOUT = 0.2
DEFAULT_MULTIPLIER = 3.0


class Variant(str, Enum):
    PM = "pm"
    P2M_ALL = "p2m-all"
    P2M = "p2m"
    P3M_ORI = "p3m-ori"
    P3M = "p3m"
    # naive baseline: observed labels taken as ground truth
    PN = "pn"

    @property
    def augments_positives(self) -> bool:
        return self in {Variant.P2M_ALL, Variant.P2M, Variant.P3M_ORI, Variant.P3M}

    @property
    def uses_mixup(self) -> bool:
        return self in {Variant.P3M_ORI, Variant.P3M}


PU_VARIANTS = (Variant.PM, Variant.P2M_ALL, Variant.P2M, Variant.P3M_ORI, Variant.P3M)


class PriorSettings(BaseModel):
    """Global loss hyperparameters shared by every class."""

    lam: float = Field(default=DEFAULT_LAMBDA, gt=0)
    alpha: float = Field(default=DEFAULT_ALPHA, gt=0)
    nu: float = Field(default=DEFAULT_NU, ge=0)
    dropout_rate: float = Field(default=DEFAULT_DROPOUT, ge=0, lt=1)
    multiplier: float = Field(default=DEFAULT_MULTIPLIER)
    variant: Variant = Variant.P3M


class ClassPrior(BaseModel):
    index: int = Field(ge=1)
    pi: float
    pi_labeled: float
    pi_u: float
    gamma: float
    active: bool

    @property
    def unlabeled_coefficient(self) -> float:
        return (1.0 - self.pi) / (1.0 - self.pi_u)

    @property
    def correction_coefficient(self) -> float:
        return (self.pi_u - self.pi_u * self.pi) / (1.0 - self.pi_u)


class PriorConfig(PriorSettings):
    classes: list[ClassPrior]

    @model_validator(mode="after")
    def _check_invariants(self) -> "PriorConfig":
        for c in self.classes:
            if not c.active:
                continue
            if not 0.0 <= c.pi_labeled <= c.pi < 1.0:
                raise ValueError(f"class {c.index}: need 0 <= pi_labeled <= pi < 1")
            if not 0.0 <= c.pi_u < 1.0:
                raise ValueError(f"class {c.index}: pi_u must lie in [0, 1)")
            if c.gamma <= 0:
                raise ValueError(f"class {c.index}: gamma must be positive")
        return self

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def pi(self) -> np.ndarray:
        return np.array([c.pi for c in self.classes])

    def pi_labeled(self) -> np.ndarray:
        return np.array([c.pi_labeled for c in self.classes])

    def gamma(self) -> np.ndarray:
        return np.array([c.gamma for c in self.classes])

    def active(self) -> np.ndarray:
        return np.array([c.active for c in self.classes], dtype=bool)

    def unlabeled_coefficients(self) -> np.ndarray:
        return np.array([c.unlabeled_coefficient if c.active else 0.0 for c in self.classes])

    def correction_coefficients(self) -> np.ndarray:
        return np.array([c.correction_coefficient if c.active else 0.0 for c in self.classes])


def estimate_labeled_prior(dataset: PuDataset, i: int) -> float:
    """Fraction of samples whose observed label for class ``i`` (1-based) is +1."""
    if dataset.n == 0:
        raise UsageError("cannot estimate a prior from an empty dataset")
    if not 1 <= i <= dataset.num_classes:
        raise UsageError(f"class index {i} outside 1..{dataset.num_classes}")
    return float(np.mean(dataset.observed[:, i - 1] == 1))


def shift_prior(pi_i: float, pi_labeled_i: float) -> float:
    """Positive prior among unlabeled samples: (pi - pi_labeled) / (1 - pi_labeled)."""
    if pi_labeled_i >= 1.0:
        raise PriorDomainError("pi_labeled must be < 1")
    if pi_labeled_i < 0.0 or pi_i >= 1.0:
        raise PriorDomainError(f"priors out of range: pi={pi_i}, pi_labeled={pi_labeled_i}")
    if pi_labeled_i > pi_i:
        raise PriorDomainError(f"labeled positives exceed the class prior: pi_labeled={pi_labeled_i} > pi={pi_i}")
    return (pi_i - pi_labeled_i) / (1.0 - pi_labeled_i)


def class_weight(pi_i: float) -> float:
    if not 0.0 < pi_i < 1.0:
        raise PriorDomainError(f"class weight needs 0 < pi < 1, got {pi_i}")
    return float(np.sqrt((1.0 - pi_i) / pi_i))


def build_prior_config(dataset: PuDataset, multiplier: float, settings: PriorSettings | None = None) -> PriorConfig:
    settings = settings or PriorSettings()
    if multiplier < 1.0:
        raise ConfigError(f"prior multiplier must be >= 1, got {multiplier}")

    classes: list[ClassPrior] = []
    for i in range(1, dataset.num_classes + 1):
        pi_labeled = estimate_labeled_prior(dataset, i)
        if pi_labeled == 0.0:
            classes.append(ClassPrior(index=i, pi=0.0, pi_labeled=0.0, pi_u=0.0, gamma=0.0, active=False))
            continue
        pi = multiplier * pi_labeled
        if pi >= 1.0:
            raise ConfigError(
                f"class {i}: multiplier {multiplier} x pi_labeled {pi_labeled:.4f} = {pi:.4f} is not < 1"
            )
        classes.append(
            ClassPrior(
                index=i,
                pi=pi,
                pi_labeled=pi_labeled,
                pi_u=shift_prior(pi, pi_labeled),
                gamma=class_weight(pi),
                active=True,
            )
        )

    return PriorConfig(**settings.model_dump(exclude={"multiplier"}), multiplier=multiplier, classes=classes)


def prior_config_from_values(
    pi: list[float],
    pi_labeled: list[float],
    settings: PriorSettings | None = None,
) -> PriorConfig:
    """PriorConfig from explicit per-class priors (oracle runs and fixtures)."""
    settings = settings or PriorSettings()
    classes = []
    for index, (p, pl) in enumerate(zip(pi, pi_labeled), start=1):
        classes.append(
            ClassPrior(
                index=index,
                pi=p,
                pi_labeled=pl,
                pi_u=shift_prior(p, pl),
                gamma=class_weight(p),
                active=True,
            )
        )
    return PriorConfig(**settings.model_dump(), classes=classes)
