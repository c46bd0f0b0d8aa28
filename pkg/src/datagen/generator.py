"""Synthetic multi-label data with SCAR label erasure.

Features are an additive mixture of orthogonal class prototypes plus isotropic
Gaussian noise; observed labels keep each true positive independently with
probability 1 - erasure rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.errors import UsageError

FORMAT_VERSION = 1
CHUNK_SIZE = 4096


class GenSpec(BaseModel):
    n: int = Field(default=5000, ge=0)
    d_in: int = Field(default=32, ge=1)
    num_classes: int = Field(default=8, ge=1)
    pi_true: list[float] = Field(default_factory=lambda: [0.2] * 8)
    erasure: list[float] = Field(default_factory=lambda: [0.7] * 8)
    separation: float = Field(default=6.0, gt=0)
    noise: float = Field(default=0.5, ge=0)
    seed: int = 62
    # class geometry; train and test splits differ only in ``seed``
    prototype_seed: int = 62

    @model_validator(mode="after")
    def _check_per_class(self) -> "GenSpec":
        if len(self.pi_true) != self.num_classes or len(self.erasure) != self.num_classes:
            raise ValueError("pi_true and erasure need one entry per class")
        if any(not 0.0 < p < 1.0 for p in self.pi_true):
            raise ValueError("every pi_true must lie in (0, 1)")
        if any(not 0.0 <= r <= 1.0 for r in self.erasure):
            raise ValueError("every erasure rate must lie in [0, 1]")
        return self

    @classmethod
    def uniform(
        cls,
        n: int,
        d_in: int,
        num_classes: int,
        pi: float,
        rho: float,
        seed: int,
        **kwargs: float | int,
    ) -> "GenSpec":
        return cls(
            n=n,
            d_in=d_in,
            num_classes=num_classes,
            pi_true=[pi] * num_classes,
            erasure=[rho] * num_classes,
            seed=seed,
            **kwargs,
        )


@dataclass(frozen=True)
class PuDataset:
    features: np.ndarray
    observed: np.ndarray
    truth: np.ndarray | None = None
    spec: GenSpec | None = None

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.observed.shape[1]

    def subset(self, indices: Sequence[int] | np.ndarray) -> "PuDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return PuDataset(
            features=self.features[idx],
            observed=self.observed[idx],
            truth=None if self.truth is None else self.truth[idx],
            spec=self.spec,
        )

    def without_truth(self) -> "PuDataset":
        return PuDataset(features=self.features, observed=self.observed, truth=None, spec=self.spec)


def _stream(seed: int, *key: int) -> np.random.Generator:
    # Counter-based stream per key so chunks are independent of scheduling.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def erase_labels(truth: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Keep each true positive with probability 1 - rate; everything else becomes -1."""
    if not 0.0 <= rate <= 1.0:
        raise UsageError(f"erasure rate must be in [0, 1], got {rate}")
    truth = np.asarray(truth)
    keep = rng.random(truth.shape) >= rate
    return np.where((truth == 1) & keep, 1, -1).astype(np.int8)


def class_prototypes(spec: GenSpec) -> np.ndarray:
    """K orthogonal directions of length ``separation`` in feature space."""
    rng = _stream(spec.prototype_seed, 0)
    gaussian = rng.standard_normal((spec.d_in, spec.num_classes))
    q, _ = np.linalg.qr(gaussian)
    return spec.separation * q.T


def generate(spec: GenSpec) -> PuDataset:
    if spec.n == 0:
        raise UsageError("n must be positive")
    if spec.d_in < spec.num_classes:
        raise UsageError(f"d_in={spec.d_in} is too small to separate {spec.num_classes} class prototypes")

    prototypes = class_prototypes(spec)
    pi = np.asarray(spec.pi_true)
    erasure = np.asarray(spec.erasure)

    features = np.empty((spec.n, spec.d_in))
    truth = np.empty((spec.n, spec.num_classes), dtype=np.int8)
    observed = np.empty((spec.n, spec.num_classes), dtype=np.int8)
    for chunk, start in enumerate(range(0, spec.n, CHUNK_SIZE)):
        stop = min(start + CHUNK_SIZE, spec.n)
        rng = _stream(spec.seed, 1, chunk)
        positive = rng.random((stop - start, spec.num_classes)) < pi
        y = np.where(positive, 1, -1).astype(np.int8)
        x = positive.astype(np.float64) @ prototypes
        x += spec.noise * rng.standard_normal((stop - start, spec.d_in))
        features[start:stop] = x
        truth[start:stop] = y
        for i in range(spec.num_classes):
            observed[start:stop, i] = erase_labels(y[:, i], float(erasure[i]), rng)

    return PuDataset(features=features, observed=observed, truth=truth, spec=spec)
