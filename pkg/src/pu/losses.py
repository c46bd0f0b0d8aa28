"""Positive-unlabeled proxy metric losses.

Notation used throughout: for an embedding f and proxies c_i, c_0,
``l(f, a, b) = softplus(lam * (b - a) . f)`` is the normalized softmax loss
that pulls f toward ``a`` and away from ``b``. For a whole batch the two
directions are held as B x K matrices:

    pos[j, i] = l(f_j, c_i, c_0)      neg[j, i] = l(f_j, c_0, c_i)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from src.autodiff import graph as ad
from src.errors import DegenerateBatchError, DegenerateMixError, UsageError
from src.pu.priors import PriorConfig, Variant

NORM_TOLERANCE = 1e-9
MIX_MIN_NORM = 1e-9


@dataclass(frozen=True)
class Batch:
    """Embeddings and label partitions for one optimization step.

    ``embeddings`` and ``augmented`` are (B, d) nodes of unit rows, ``proxies``
    is the normalized (K+1, d) proxy table. ``observed`` holds s in {-1, +1};
    P_i is the set of rows with s_i = +1 and U_i the rest.
    """

    embeddings: ad.Node
    proxies: ad.Node
    observed: np.ndarray
    augmented: ad.Node | None = None
    truth: np.ndarray | None = None

    def __post_init__(self) -> None:
        rows, width = self.embeddings.shape
        if self.observed.shape != (rows, self.num_classes):
            raise UsageError(f"observed labels {self.observed.shape} do not match batch ({rows}, {self.num_classes})")
        if self.proxies.shape[1] != width:
            raise UsageError("proxy width differs from embedding width")
        for name, node in (("embeddings", self.embeddings), ("augmented", self.augmented), ("proxies", self.proxies)):
            if node is None:
                continue
            if node.shape[1] != width or (name == "augmented" and node.shape[0] != rows):
                raise UsageError(f"{name} has shape {node.shape}")
            _require_unit_rows(name, node.value)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def num_classes(self) -> int:
        return self.proxies.shape[0] - 1

    def positive_mask(self) -> np.ndarray:
        return self.observed == 1

    def unlabeled_mask(self) -> np.ndarray:
        return self.observed != 1


@dataclass
class ClassTerms:
    index: int
    positive_term: float = 0.0
    unlabeled_term: float = 0.0
    correction_term: float = 0.0
    clamped: bool = False
    mixup_term: float = 0.0
    skipped: bool = False


@dataclass
class LossBreakdown:
    classes: list[ClassTerms]
    objective: ad.Node = field(repr=False)
    l_pm_or_p2m: float = 0.0
    l_pmix: float = 0.0
    l_total: float = 0.0
    nu: float = 0.0
    mu: float | None = None
    mixup_empty: bool = False

    @property
    def clamp_fraction(self) -> float:
        scored = [c for c in self.classes if not c.skipped]
        if not scored:
            return 0.0
        return sum(c.clamped for c in scored) / len(scored)


@dataclass(frozen=True)
class MixupTerms:
    total: ad.Node
    per_class: np.ndarray
    empty: bool


def _require_unit_rows(name: str, value: np.ndarray) -> None:
    norms = np.linalg.norm(np.atleast_2d(value), axis=-1)
    if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
        raise UsageError(f"{name} must be unit-norm (max deviation {np.max(np.abs(norms - 1.0)):.3e})")


def softmax_norm_loss(f: ad.Node, c_pos: ad.Node, c_neg: ad.Node, lam: float) -> ad.Node:
    """-log(e^{lam c_pos.f} / (e^{lam c_pos.f} + e^{lam c_neg.f})) as softplus(lam (c_neg - c_pos).f)."""
    f, c_pos, c_neg = ad.as_node(f), ad.as_node(c_pos), ad.as_node(c_neg)
    if lam <= 0:
        raise UsageError(f"lambda must be positive, got {lam}")
    for name, node in (("f", f), ("c_pos", c_pos), ("c_neg", c_neg)):
        if node.value.ndim != 1:
            raise UsageError(f"{name} must be a vector")
        _require_unit_rows(name, node.value)
    return ad.softplus(ad.scale(ad.dot(ad.sub(c_neg, c_pos), f), lam))


def batch_losses(embeddings: ad.Node, proxies: ad.Node, lam: float) -> tuple[ad.Node, ad.Node]:
    """(pos, neg) loss matrices for every (row, class) pair of a batch."""
    num_classes = proxies.shape[0] - 1
    # selector turns proxy scores into c_i.f - c_0.f columns
    selector = np.zeros((num_classes + 1, num_classes))
    selector[0, :] = -1.0
    selector[1:, :] = np.eye(num_classes)
    scores = ad.matmul(embeddings, ad.transpose(proxies))
    margin = ad.matmul(scores, ad.constant(selector))
    return ad.softplus(ad.scale(margin, -lam)), ad.softplus(ad.scale(margin, lam))


def _weighted_column_sums(losses: ad.Node, weights: np.ndarray) -> ad.Node:
    return ad.sum_(ad.mul(losses, ad.constant(weights)), axis=0)


def _mean_weights(mask: np.ndarray, coefficient: np.ndarray) -> np.ndarray:
    counts = mask.sum(axis=0)
    per_class = np.divide(coefficient, counts, out=np.zeros(mask.shape[1]), where=counts > 0)
    return mask * per_class


def _sum_nodes(nodes: list[ad.Node]) -> ad.Node:
    if not nodes:
        return ad.constant(0.0)
    total = nodes[0]
    for node in nodes[1:]:
        total = ad.add(total, node)
    return total


def _nonnegative_risk(
    batch: Batch,
    priors: PriorConfig,
    augment_positives: bool,
    augment_unlabeled: bool,
    clamp: bool = True,
    class_weight: bool = True,
) -> LossBreakdown:
    if priors.num_classes != batch.num_classes:
        raise UsageError(f"priors cover {priors.num_classes} classes, batch has {batch.num_classes}")
    if (augment_positives or augment_unlabeled) and batch.augmented is None:
        raise UsageError("augmented embeddings are required for this variant")
    if batch.augmented is batch.embeddings:
        # averaging a pass with itself is the single-pass risk
        augment_positives = augment_unlabeled = False

    positives = batch.positive_mask()
    unlabeled = batch.unlabeled_mask()
    if not unlabeled.any(axis=0).any():
        raise DegenerateBatchError("no class has an unlabeled sample in this batch")

    active = priors.active()
    pi = priors.pi()
    gamma = priors.gamma() if class_weight else np.ones(priors.num_classes)
    w_pos = _mean_weights(positives, np.where(active, gamma * pi, 0.0))
    w_unl = _mean_weights(unlabeled, np.where(active, priors.unlabeled_coefficients(), 0.0))
    w_cor = _mean_weights(positives, np.where(active, priors.correction_coefficients(), 0.0))

    pos, neg = batch_losses(batch.embeddings, batch.proxies, priors.lam)
    if augment_positives or augment_unlabeled:
        pos_aug, neg_aug = batch_losses(batch.augmented, batch.proxies, priors.lam)

    if augment_positives:
        # halves are exact in floating point, so identical passes reproduce PM bit for bit
        positive_vec = _weighted_column_sums(pos, w_pos / 2) + _weighted_column_sums(pos_aug, w_pos / 2)
        correction_vec = _weighted_column_sums(neg, w_cor / 2) + _weighted_column_sums(neg_aug, w_cor / 2)
    else:
        positive_vec = _weighted_column_sums(pos, w_pos)
        correction_vec = _weighted_column_sums(neg, w_cor)
    if augment_unlabeled:
        unlabeled_vec = _weighted_column_sums(neg, w_unl / 2) + _weighted_column_sums(neg_aug, w_unl / 2)
    else:
        unlabeled_vec = _weighted_column_sums(neg, w_unl)

    terms: list[ClassTerms] = []
    contributions: list[ad.Node] = []
    for i in range(priors.num_classes):
        entry = ClassTerms(index=i + 1)
        terms.append(entry)
        if not active[i]:
            entry.skipped = True
            continue
        positive_term = ad.take(positive_vec, i)
        bracket = ad.sub(ad.take(unlabeled_vec, i), ad.take(correction_vec, i))
        entry.positive_term = positive_term.item()
        entry.unlabeled_term = float(unlabeled_vec.value[i])
        entry.correction_term = float(correction_vec.value[i])
        entry.clamped = bracket.item() < 0.0
        contributions.append(positive_term)
        if clamp and entry.clamped:
            # max(0, bracket) == 0: no gradient flows through a clamped bracket
            continue
        contributions.append(bracket)

    objective = _sum_nodes(contributions)
    value = objective.item()
    return LossBreakdown(
        classes=terms,
        objective=objective,
        l_pm_or_p2m=value,
        l_total=value,
    )


def pm_risk_empirical(
    batch: Batch,
    priors: PriorConfig,
    clamp: bool = True,
    class_weight: bool = True,
) -> LossBreakdown:
    """Non-negative PU metric risk with prior shift, one clamp per class.

    ``clamp=False, class_weight=False`` gives the plain unbiased estimator.
    """
    return _nonnegative_risk(batch, priors, augment_positives=False, augment_unlabeled=False, clamp=clamp, class_weight=class_weight)


def p2m_risk_empirical(batch: Batch, priors: PriorConfig, augment_all: bool | None = None) -> LossBreakdown:
    """PM risk with each positive averaged over its two dropout passes.

    With ``augment_all`` (default: variant P2M_ALL) unlabeled samples are
    averaged over both passes as well.
    """
    if augment_all is None:
        augment_all = priors.variant is Variant.P2M_ALL
    return _nonnegative_risk(batch, priors, augment_positives=True, augment_unlabeled=augment_all)


def pnm_risk(
    batch: Batch,
    priors: PriorConfig,
    labels: np.ndarray | None = None,
    pi: np.ndarray | None = None,
) -> LossBreakdown:
    """Positive-negative risk on fully labeled data.

    Defaults to ``batch.truth`` and the configured class priors; pass the
    observed labels and ``pi_labeled`` for the naive baseline.
    """
    labels = batch.truth if labels is None else np.asarray(labels)
    if labels is None:
        raise UsageError("pnm_risk needs true labels")
    if labels.shape != batch.observed.shape:
        raise UsageError("label matrix does not match the batch")
    pi = priors.pi() if pi is None else np.asarray(pi, dtype=np.float64)

    positives = labels == 1
    negatives = ~positives
    w_pos = _mean_weights(positives, pi)
    w_neg = _mean_weights(negatives, 1.0 - pi)
    pos, neg = batch_losses(batch.embeddings, batch.proxies, priors.lam)
    positive_vec = _weighted_column_sums(pos, w_pos)
    negative_vec = _weighted_column_sums(neg, w_neg)

    terms: list[ClassTerms] = []
    contributions: list[ad.Node] = []
    for i in range(batch.num_classes):
        entry = ClassTerms(index=i + 1)
        terms.append(entry)
        if not positives[:, i].any() and not negatives[:, i].any():
            entry.skipped = True
            continue
        entry.positive_term = float(positive_vec.value[i])
        entry.unlabeled_term = float(negative_vec.value[i])
        contributions.append(ad.take(positive_vec, i))
        contributions.append(ad.take(negative_vec, i))

    objective = _sum_nodes(contributions)
    return LossBreakdown(classes=terms, objective=objective, l_pm_or_p2m=objective.item(), l_total=objective.item())


def mixup_embedding(f: ad.Node, anchor: ad.Node, mu: float) -> ad.Node:
    """Unit-normalized mu * f + (1 - mu) * anchor (row-wise for matrices)."""
    f, anchor = ad.as_node(f), ad.as_node(anchor)
    if not 0.0 <= mu <= 1.0:
        raise UsageError(f"mu must lie in [0, 1], got {mu}")
    if f.shape != anchor.shape:
        raise UsageError(f"cannot mix shapes {f.shape} and {anchor.shape}")
    _require_unit_rows("f", f.value)
    _require_unit_rows("anchor", anchor.value)
    mixed = ad.add(ad.scale(f, mu), ad.scale(anchor, 1.0 - mu))
    if np.any(np.linalg.norm(np.atleast_2d(mixed.value), axis=-1) < MIX_MIN_NORM):
        raise DegenerateMixError("mixup produced a (near) zero vector")
    return ad.l2norm(mixed)


def sample_mu(rng: np.random.Generator, alpha: float) -> float:
    if alpha <= 0:
        raise UsageError(f"alpha must be positive, got {alpha}")
    return float(rng.beta(alpha, alpha))


def _sample_anchor_rows(rng: np.random.Generator, pool: np.ndarray, count: int) -> np.ndarray:
    if count <= pool.size:
        return rng.choice(pool, size=count, replace=False)
    return rng.choice(pool, size=count, replace=True)


def pmix_loss(
    batch: Batch,
    mu: float,
    priors: PriorConfig,
    rng: np.random.Generator | None = None,
    original: bool | None = None,
) -> MixupTerms:
    """Positive mixup loss over both dropout passes of every positive.

    Anchors are the none-class proxy c_0; with ``original`` (default: variant
    P3M_ORI) each positive is mixed with an unlabeled embedding of the same
    class drawn from the batch.
    """
    if original is None:
        original = priors.variant is Variant.P3M_ORI
    if original and rng is None:
        raise UsageError("mixing with unlabeled anchors needs an rng")
    if not 0.0 <= mu <= 1.0:
        raise UsageError(f"mu must lie in [0, 1], got {mu}")

    if batch.augmented is None or batch.augmented is batch.embeddings:
        passes = [batch.embeddings]
    else:
        passes = [batch.embeddings, batch.augmented]
    positives = batch.positive_mask()
    unlabeled = batch.unlabeled_mask()
    active = priors.active()
    lam = priors.lam
    c0 = ad.take(batch.proxies, 0)

    per_class = np.zeros(batch.num_classes)
    contributions: list[ad.Node] = []
    for i in range(batch.num_classes):
        rows = np.flatnonzero(positives[:, i])
        if not active[i] or rows.size == 0:
            continue
        if original:
            pool = np.flatnonzero(unlabeled[:, i])
            if pool.size == 0:
                continue
            anchor_rows = _sample_anchor_rows(rng, pool, rows.size)
        weight = 1.0 / (len(passes) * rows.size)
        class_nodes: list[ad.Node] = []
        for emb in passes:
            f = ad.take(emb, rows)
            anchor = ad.take(batch.embeddings, anchor_rows) if original else ad.tile(c0, rows.size)
            mixed = mixup_embedding(f, anchor, mu)
            pos, neg = batch_losses(mixed, batch.proxies, lam)
            pull = ad.sum_(ad.take(pos, i, axis=1))
            push = ad.sum_(ad.take(neg, i, axis=1))
            class_nodes.append(ad.scale(pull, mu * weight))
            class_nodes.append(ad.scale(push, (1.0 - mu) * weight))
        class_total = _sum_nodes(class_nodes)
        per_class[i] = class_total.item()
        contributions.append(class_total)

    return MixupTerms(total=_sum_nodes(contributions), per_class=per_class, empty=not contributions)


def p3m_total(
    batch: Batch,
    priors: PriorConfig,
    mu: float | None = None,
    rng: np.random.Generator | None = None,
) -> LossBreakdown:
    """Variant objective: risk term plus nu times the positive mixup loss."""
    variant = priors.variant
    if variant is Variant.PN:
        raise UsageError("the naive PN baseline is evaluated with pnm_risk")
    if variant is Variant.PM:
        return pm_risk_empirical(batch, priors)

    breakdown = p2m_risk_empirical(batch, priors, augment_all=variant is Variant.P2M_ALL)
    nu = priors.nu if variant.uses_mixup else 0.0
    breakdown.nu = nu
    if nu == 0.0:
        return breakdown
    if mu is None:
        raise UsageError("mixup variants need mu")

    mixup = pmix_loss(batch, mu, priors, rng=rng, original=variant is Variant.P3M_ORI)
    for entry, value in zip(breakdown.classes, mixup.per_class):
        entry.mixup_term = float(value)
    breakdown.objective = ad.add(breakdown.objective, ad.scale(mixup.total, nu))
    breakdown.mu = mu
    breakdown.mixup_empty = mixup.empty
    breakdown.l_pmix = mixup.total.item()
    breakdown.l_total = breakdown.objective.item()
    return breakdown
