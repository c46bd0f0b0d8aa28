from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from src.config.schemas import TrainConfig
from src.config.settings import sweep_threads
from src.datagen.generator import PuDataset
from src.errors import UsageError
from src.pu.priors import PriorConfig
from src.telemetry import log_event
from src.training.metrics import evaluate
from src.training.trainer import priors_for, train

SWEEPABLE = ("multiplier", "lam", "dropout_rate", "alpha", "nu")


@dataclass(frozen=True)
class SweepCell:
    value: float
    seed: int
    precision: float
    recall: float
    f1: float
    priors: PriorConfig


@dataclass(frozen=True)
class SweepSummary:
    value: float
    precision: float
    recall: float
    f1: float
    seeds: int


@dataclass(frozen=True)
class SweepTable:
    param: str
    cells: list[SweepCell]
    summary: list[SweepSummary]


@dataclass(frozen=True)
class TrendSummary:
    f1_spread: float
    recall_nondecreasing_pairs: int
    pairs: int


def _run_cell(config: TrainConfig, value: float, train_set: PuDataset, eval_set: PuDataset) -> SweepCell:
    priors = priors_for(config, train_set)
    params, _ = train(config, train_set, priors=priors)
    report = evaluate(params, eval_set)
    return SweepCell(
        value=value,
        seed=config.seed,
        precision=report.precision,
        recall=report.recall,
        f1=report.f1,
        priors=priors,
    )


def _summarize(cells: Iterable[SweepCell], values: Sequence[float]) -> list[SweepSummary]:
    rows = []
    cells = list(cells)
    for value in values:
        group = [c for c in cells if c.value == value]
        rows.append(
            SweepSummary(
                value=value,
                precision=float(np.mean([c.precision for c in group])),
                recall=float(np.mean([c.recall for c in group])),
                f1=float(np.mean([c.f1 for c in group])),
                seeds=len(group),
            )
        )
    return rows


def sweep_hyperparameter(
    base: TrainConfig,
    name: str,
    values: Sequence[float],
    train_set: PuDataset,
    eval_set: PuDataset,
    seeds: Sequence[int],
    workers: Optional[int] = None,
) -> SweepTable:
    """Train one model per (value, seed) and report mean test metrics per value."""
    if name not in SWEEPABLE:
        raise UsageError(f"cannot sweep '{name}' (choose from {', '.join(SWEEPABLE)})")
    if not values:
        raise UsageError("sweep needs at least one value")
    if not seeds:
        raise UsageError("sweep needs at least one seed")

    configs = [
        (base.with_overrides(seed=seed, **{name: float(value)}), float(value))
        for value in values
        for seed in seeds
    ]
    workers = workers or sweep_threads()
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
            cells = list(
                pool.map(
                    _run_cell,
                    [c for c, _ in configs],
                    [v for _, v in configs],
                    [train_set] * len(configs),
                    [eval_set] * len(configs),
                )
            )
    else:
        cells = [_run_cell(config, value, train_set, eval_set) for config, value in configs]

    for cell in cells:
        log_event(
            "sweep_cell",
            param=name,
            value=cell.value,
            seed=cell.seed,
            precision=cell.precision,
            recall=cell.recall,
            f1=cell.f1,
        )
    return SweepTable(param=name, cells=cells, summary=_summarize(cells, [float(v) for v in values]))


def sweep_prior_multiplier(
    base: TrainConfig,
    multipliers: Sequence[float],
    train_set: PuDataset,
    eval_set: PuDataset,
    seeds: Sequence[int],
    workers: Optional[int] = None,
) -> SweepTable:
    return sweep_hyperparameter(base, "multiplier", multipliers, train_set, eval_set, seeds, workers=workers)


def summarize_trend(summary: Sequence[SweepSummary]) -> TrendSummary:
    """F1 spread across values and how many consecutive value pairs keep recall from falling."""
    if not summary:
        raise UsageError("empty sweep summary")
    ordered = sorted(summary, key=lambda row: row.value)
    f1s = [row.f1 for row in ordered]
    pairs = list(zip(ordered[:-1], ordered[1:]))
    return TrendSummary(
        f1_spread=max(f1s) - min(f1s),
        recall_nondecreasing_pairs=sum(1 for a, b in pairs if b.recall >= a.recall),
        pairs=len(pairs),
    )
