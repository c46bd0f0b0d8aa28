"""Mini-batch training of the encoder and proxies against one loss variant.

Randomness is split into independent streams spawned from the run seed (data
order, dropout masks, mixup draws) so that switching a component off leaves
the other streams untouched.
"""
from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from src.autodiff import graph as ad
from src.config.schemas import ClassTermRecord, MetricsReport, StepRecord, TrainConfig
from src.datagen.generator import PuDataset
from src.errors import DegenerateBatchError, NumericError, TrainingDivergedError, UsageError
from src.model.encoder import ModelParams, ParamNodes, encode_batch, init_params, predict_labels, proxy_table, sample_mask
from src.pu.losses import Batch, LossBreakdown, p3m_total, pnm_risk, sample_mu
from src.pu.priors import PriorConfig, Variant, build_prior_config
from src.telemetry import log_event
from src.training.metrics import micro_report
from src.training.optimizer import Adam, linear_schedule


def priors_for(config: TrainConfig, dataset: PuDataset) -> PriorConfig:
    settings = config.priors
    if settings.variant is Variant.PN:
        # observed labels taken at face value: pi = pi_labeled
        return build_prior_config(dataset, 1.0, settings)
    return build_prior_config(dataset, settings.multiplier, settings)


def _step_loss(
    config: TrainConfig,
    priors: PriorConfig,
    nodes: ParamNodes,
    features: np.ndarray,
    observed: np.ndarray,
    dropout_rng: np.random.Generator,
    mix_rng: np.random.Generator,
) -> LossBreakdown:
    variant = config.variant
    rate = config.priors.dropout_rate
    hidden = config.hidden_dims
    rows = features.shape[0]
    proxies = proxy_table(nodes)

    embeddings = encode_batch(features, nodes, sample_mask(dropout_rng, rate, hidden, rows=rows))
    if variant is Variant.PN:
        batch = Batch(embeddings=embeddings, proxies=proxies, observed=observed)
        return pnm_risk(batch, priors, labels=observed, pi=priors.pi_labeled())
    if variant is Variant.PM:
        return p3m_total(Batch(embeddings=embeddings, proxies=proxies, observed=observed), priors)

    if rate == 0.0:
        augmented = embeddings
    else:
        augmented = encode_batch(features, nodes, sample_mask(dropout_rng, rate, hidden, rows=rows))
    batch = Batch(embeddings=embeddings, augmented=augmented, proxies=proxies, observed=observed)
    mu = None
    if variant.uses_mixup and priors.nu > 0:
        mu = sample_mu(mix_rng, priors.alpha)
    return p3m_total(batch, priors, mu=mu, rng=mix_rng)


def _step_record(step: int, epoch: int, lr: float, breakdown: LossBreakdown) -> StepRecord:
    return StepRecord(
        step=step,
        epoch=epoch,
        lr=lr,
        mu=breakdown.mu,
        l_pm_or_p2m=breakdown.l_pm_or_p2m,
        l_pmix=breakdown.l_pmix,
        l_total=breakdown.l_total,
        clamp_fraction=breakdown.clamp_fraction,
        mixup_empty=breakdown.mixup_empty,
        classes=[
            ClassTermRecord(
                index=c.index,
                positive=c.positive_term,
                unlabeled=c.unlabeled_term,
                correction=c.correction_term,
                clamped=c.clamped,
                mixup=c.mixup_term,
                skipped=c.skipped,
            )
            for c in breakdown.classes
        ],
    )


def train(
    config: TrainConfig,
    dataset: PuDataset,
    priors: Optional[PriorConfig] = None,
    init: Optional[ModelParams] = None,
) -> tuple[ModelParams, MetricsReport]:
    if dataset.n < 2:
        raise UsageError("training needs at least two samples")
    dims = config.dims(dataset.d_in)
    params = init or init_params(config.seed, dims, dataset.num_classes)
    if params.dims != dims or params.num_classes != dataset.num_classes:
        raise UsageError(f"params {params.dims} (K={params.num_classes}) do not match config/dataset {dims} (K={dataset.num_classes})")
    if priors is None:
        priors = priors_for(config, dataset)
    elif priors.num_classes != dataset.num_classes:
        raise UsageError("prior config and dataset disagree on the class count")

    order_seq, dropout_seq, mix_seq = np.random.SeedSequence(config.seed).spawn(3)
    order_rng = np.random.default_rng(order_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    mix_rng = np.random.default_rng(mix_seq)

    batch_size = min(config.batch_size, dataset.n)
    steps_per_epoch = dataset.n // batch_size
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)
    warmup_steps = int(config.warmup_fraction * total_steps)

    optimizer = Adam(
        params.to_dict(),
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    arrays = params.to_dict()
    step_log: list[StepRecord] = []
    skipped = 0
    clamp_hits = 0
    clamp_slots = 0

    log_event(
        "train_start",
        variant=config.variant.value,
        seed=config.seed,
        n=dataset.n,
        total_steps=total_steps,
        pi=[round(p, 6) for p in priors.pi().tolist()],
    )

    step = 0
    last_finite = -1
    for epoch in range(config.epochs):
        if step >= total_steps:
            break
        order = order_rng.permutation(dataset.n)
        for b in range(steps_per_epoch):
            if step >= total_steps:
                break
            idx = order[b * batch_size : (b + 1) * batch_size]
            nodes = ParamNodes.from_params(ModelParams.from_dict(arrays))
            lr = config.learning_rate * linear_schedule(step, warmup_steps, total_steps)
            try:
                breakdown = _step_loss(
                    config,
                    priors,
                    nodes,
                    dataset.features[idx],
                    dataset.observed[idx],
                    dropout_rng,
                    mix_rng,
                )
                grads = ad.backward(breakdown.objective, nodes.as_mapping())
            except DegenerateBatchError as exc:
                skipped += 1
                log_event("train_step_skipped", level=logging.WARNING, step=step, reason=str(exc))
                step += 1
                continue
            except NumericError as exc:
                raise TrainingDivergedError(last_finite, f"non-finite value in op '{exc.op}' at step {step}") from exc
            if not math.isfinite(breakdown.l_total):
                raise TrainingDivergedError(last_finite, f"loss is not finite at step {step}")

            arrays = optimizer.step(arrays, grads, lr)
            if not all(np.all(np.isfinite(a)) for a in arrays.values()):
                raise TrainingDivergedError(last_finite, f"parameters became non-finite at step {step}")
            last_finite = step

            record = _step_record(step, epoch, lr, breakdown)
            step_log.append(record)
            scored = [c for c in record.classes if not c.skipped]
            clamp_hits += sum(c.clamped for c in scored)
            clamp_slots += len(scored)
            log_event(
                "train_step",
                level=logging.INFO if step % config.log_every == 0 else logging.DEBUG,
                step=step,
                epoch=epoch,
                lr=lr,
                l_total=record.l_total,
                l_pmix=record.l_pmix,
                clamp_fraction=record.clamp_fraction,
            )
            step += 1

    params = ModelParams.from_dict(arrays)
    if dataset.truth is not None:
        report = micro_report(dataset.truth == 1, predict_labels(dataset.features, params))
        reference = "truth"
    else:
        report = micro_report(dataset.observed == 1, predict_labels(dataset.features, params))
        reference = "observed"
    report = report.model_copy(
        update={
            "reference": reference,
            "variant": config.variant,
            "multiplier": priors.multiplier,
            "steps": len(step_log),
            "clamp_frequency": clamp_hits / clamp_slots if clamp_slots else 0.0,
            "final_loss": step_log[-1].l_total if step_log else None,
            "step_log": step_log,
        }
    )
    log_event(
        "train_done",
        variant=config.variant.value,
        seed=config.seed,
        steps=len(step_log),
        skipped=skipped,
        f1=report.f1,
        precision=report.precision,
        recall=report.recall,
    )
    return params, report
