"""Analytic-vs-numeric gradient comparison for every loss variant."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.gradcheck import finite_difference, max_relative_error
from src.config.schemas import GradCheckSettings
from src.errors import NumericError
from src.model.encoder import DropoutMask, ModelParams, ParamNodes, encode_batch, init_params, proxy_table, sample_mask
from src.pu.losses import Batch, p3m_total
from src.pu.priors import PU_VARIANTS, PriorSettings, Variant, prior_config_from_values
from src.telemetry import log_event

BackwardFn = Callable[[ad.Node, Mapping[str, ad.Node]], ad.Gradient]


@dataclass
class VariantCheck:
    variant: Variant
    max_error: float = 0.0
    instances: int = 0
    error: Optional[str] = None

    def passed(self, tolerance: float) -> bool:
        return self.error is None and self.max_error < tolerance


@dataclass
class GradCheckReport:
    tolerance: float
    variants: list[VariantCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed(self.tolerance) for v in self.variants)

    def format(self) -> str:
        lines = [f"{'variant':<10}{'instances':>10}{'max_rel_err':>14}  status"]
        for v in self.variants:
            status = "PASS" if v.passed(self.tolerance) else "FAIL"
            detail = f"  ({v.error})" if v.error else ""
            lines.append(f"{v.variant.value:<10}{v.instances:>10}{v.max_error:>14.3e}  {status}{detail}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CheckInstance:
    """A frozen random problem: every random choice is fixed so the loss is a pure function of params."""

    params: ModelParams
    features: np.ndarray
    observed: np.ndarray
    masks: tuple[DropoutMask, DropoutMask]
    mu: float
    anchor_seed: int
    pi: list[float]
    pi_labeled: list[float]


def random_instance(settings: GradCheckSettings, rng: np.random.Generator, dropout_rate: float) -> CheckInstance:
    n, k = settings.batch_size, settings.num_classes
    dims = [settings.d_in, *settings.hidden_dims, settings.embed_dim]
    params = init_params(int(rng.integers(2**31)), dims, k)
    features = rng.standard_normal((n, settings.d_in))

    # every class keeps at least one positive and one unlabeled row
    observed = np.where(rng.random((n, k)) < 0.4, 1, -1).astype(np.int8)
    for i in range(k):
        observed[0, i] = 1
        observed[1, i] = -1

    masks = (
        sample_mask(rng, dropout_rate, settings.hidden_dims, rows=n),
        sample_mask(rng, dropout_rate, settings.hidden_dims, rows=n),
    )
    pi_labeled = rng.uniform(0.05, 0.25, size=k)
    pi = np.minimum(pi_labeled * rng.uniform(1.5, 3.0, size=k), 0.9)
    return CheckInstance(
        params=params,
        features=features,
        observed=observed,
        masks=masks,
        mu=float(rng.uniform(0.1, 0.9)),
        anchor_seed=int(rng.integers(2**31)),
        pi=pi.tolist(),
        pi_labeled=pi_labeled.tolist(),
    )


def instance_loss(instance: CheckInstance, settings: PriorSettings, nodes: ParamNodes) -> ad.Node:
    priors = prior_config_from_values(instance.pi, instance.pi_labeled, settings)
    embeddings = encode_batch(instance.features, nodes, instance.masks[0])
    augmented = encode_batch(instance.features, nodes, instance.masks[1])
    batch = Batch(embeddings=embeddings, augmented=augmented, proxies=proxy_table(nodes), observed=instance.observed)
    # fresh generator per evaluation keeps the sampled mixup anchors fixed
    rng = np.random.default_rng(instance.anchor_seed)
    return p3m_total(batch, priors, mu=instance.mu, rng=rng).objective


def check_instance(
    instance: CheckInstance,
    settings: PriorSettings,
    epsilon: float,
    backward_fn: BackwardFn = ad.backward,
) -> float:
    nodes = ParamNodes.from_params(instance.params)
    analytic = backward_fn(instance_loss(instance, settings, nodes), nodes.as_mapping())

    def scalar_fn(arrays: Mapping[str, np.ndarray]) -> float:
        point = ParamNodes.from_params(ModelParams.from_dict(dict(arrays)))
        return instance_loss(instance, settings, point).item()

    numeric = finite_difference(scalar_fn, instance.params.to_dict(), epsilon=epsilon)
    return max_relative_error(analytic, numeric)


def run_grad_check(
    settings: GradCheckSettings,
    priors: Optional[PriorSettings] = None,
    variants: Sequence[Variant] = PU_VARIANTS,
    backward_fn: BackwardFn = ad.backward,
) -> GradCheckReport:
    priors = priors or PriorSettings()
    # nu > 0 so the mixup terms are exercised even when the configured run disables them
    nu = priors.nu if priors.nu > 0 else 0.05
    dropout_rate = priors.dropout_rate if priors.dropout_rate > 0 else 0.2
    report = GradCheckReport(tolerance=settings.tolerance)

    for variant in variants:
        check = VariantCheck(variant=variant)
        variant_settings = priors.model_copy(update={"variant": variant, "nu": nu, "dropout_rate": dropout_rate})
        rng = np.random.default_rng(np.random.SeedSequence(settings.seed, spawn_key=(PU_VARIANTS.index(variant),)))
        for _ in range(settings.instances):
            instance = random_instance(settings, rng, dropout_rate)
            try:
                error = check_instance(instance, variant_settings, settings.epsilon, backward_fn)
            except NumericError as exc:
                check.error = f"non-finite value in op '{exc.op}'"
                break
            if not np.isfinite(error):
                check.error = "non-finite gradient error"
                break
            check.max_error = max(check.max_error, error)
            check.instances += 1
        log_event(
            "grad_check_variant",
            variant=variant.value,
            instances=check.instances,
            max_error=check.max_error,
            passed=check.passed(settings.tolerance),
            error=check.error,
        )
        report.variants.append(check)
    return report
