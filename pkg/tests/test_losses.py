import math

import numpy as np
import pytest

from src.autodiff import graph as ad
from src.errors import DegenerateBatchError, DegenerateMixError, UsageError
from src.pu.losses import (
    Batch,
    batch_losses,
    mixup_embedding,
    p2m_risk_empirical,
    p3m_total,
    pm_risk_empirical,
    pmix_loss,
    pnm_risk,
    sample_mu,
    softmax_norm_loss,
)
from src.pu.priors import PriorSettings, Variant, prior_config_from_values

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _batch(seed: int = 0, n: int = 8, d: int = 5, k: int = 3, augmented: bool = True) -> Batch:
    rng = np.random.default_rng(seed)
    observed = np.where(rng.random((n, k)) < 0.4, 1, -1).astype(np.int8)
    observed[0] = 1
    observed[1] = -1
    return Batch(
        embeddings=ad.constant(_unit_rows(rng, n, d)),
        augmented=ad.constant(_unit_rows(rng, n, d)) if augmented else None,
        proxies=ad.constant(_unit_rows(rng, k + 1, d)),
        observed=observed,
    )


def _priors(k: int = 3, variant: Variant = Variant.P3M, **settings: float):
    pi = [0.3, 0.25, 0.4, 0.2][:k]
    pi_labeled = [0.1, 0.05, 0.2, 0.1][:k]
    return prior_config_from_values(pi, pi_labeled, PriorSettings(variant=variant, **settings))


def test_softmax_norm_loss_equal_dots_is_ln2() -> None:
    f = (E1 + E2) / np.sqrt(2.0)
    assert softmax_norm_loss(f, E1, E2, 10.0).item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_softmax_norm_loss_at_the_positive_proxy() -> None:
    assert softmax_norm_loss(E1, E1, E2, 10.0).item() == pytest.approx(math.log1p(math.exp(-10.0)), rel=1e-12)
    assert softmax_norm_loss(E1, E1, E2, 10.0).item() == pytest.approx(4.5399e-5, rel=1e-4)


def test_softmax_norm_loss_at_the_negative_proxy() -> None:
    assert softmax_norm_loss(E2, E1, E2, 10.0).item() == pytest.approx(10.0000454, abs=1e-7)


def test_softmax_norm_loss_requires_unit_vectors() -> None:
    with pytest.raises(UsageError):
        softmax_norm_loss(E1 * (1.0 + 1e-6), E1, E2, 10.0)
    with pytest.raises(UsageError):
        softmax_norm_loss(E1, E1, E2, 0.0)


def test_swapped_losses_are_at_least_two_ln2() -> None:
    rng = np.random.default_rng(1)
    for _ in range(50):
        f, a, b = _unit_rows(rng, 3, 4)
        total = softmax_norm_loss(f, a, b, 10.0).item() + softmax_norm_loss(f, b, a, 10.0).item()
        assert total >= 2.0 * math.log(2.0) - 1e-12


def test_larger_lambda_sharpens_the_loss() -> None:
    f = np.array([0.8, 0.6, 0.0])
    lams = [1.0, 2.0, 5.0, 10.0]
    closer = [softmax_norm_loss(f, E1, E2, lam).item() for lam in lams]
    farther = [softmax_norm_loss(f, E2, E1, lam).item() for lam in lams]
    assert all(b < a for a, b in zip(closer, closer[1:]))
    assert all(b > a for a, b in zip(farther, farther[1:]))


def test_batch_losses_match_scalar_loss() -> None:
    batch = _batch(seed=2)
    pos, neg = batch_losses(batch.embeddings, batch.proxies, 10.0)
    table = batch.proxies.value
    for j in range(batch.size):
        f = batch.embeddings.value[j]
        for i in range(batch.num_classes):
            assert pos.value[j, i] == pytest.approx(softmax_norm_loss(f, table[i + 1], table[0], 10.0).item(), abs=1e-12)
            assert neg.value[j, i] == pytest.approx(softmax_norm_loss(f, table[0], table[i + 1], 10.0).item(), abs=1e-12)


def test_pnm_risk_worked_example() -> None:
    batch = Batch(
        embeddings=ad.constant(np.stack([E2, E1])),
        proxies=ad.constant(np.stack([E1, E2])),
        observed=np.array([[-1], [-1]], dtype=np.int8),
        truth=np.array([[1], [-1]], dtype=np.int8),
    )
    priors = prior_config_from_values([0.5], [0.0], PriorSettings(lam=10.0))
    expected = 0.5 * math.log1p(math.exp(-10.0)) + 0.5 * math.log1p(math.exp(-10.0))
    assert pnm_risk(batch, priors).l_total == pytest.approx(expected, rel=1e-12)
    assert pnm_risk(batch, priors).l_total == pytest.approx(4.54e-5, rel=1e-3)


def test_pnm_risk_with_zero_prior_keeps_only_negatives() -> None:
    batch = _batch(seed=3, augmented=False)
    truth = batch.observed.copy()
    batch = Batch(embeddings=batch.embeddings, proxies=batch.proxies, observed=batch.observed, truth=truth)
    priors = _priors()
    _, neg = batch_losses(batch.embeddings, batch.proxies, priors.lam)
    negatives = truth != 1
    expected = sum(neg.value[negatives[:, i], i].mean() for i in range(3))
    result = pnm_risk(batch, priors, pi=np.zeros(3))
    assert result.l_total == pytest.approx(expected, abs=1e-12)


def test_pnm_risk_needs_truth() -> None:
    with pytest.raises(UsageError):
        pnm_risk(_batch(augmented=False), _priors())


def _risk_fixture() -> tuple[Batch, object]:
    f_p = np.array([0.2, 0.8, math.sqrt(0.32)])
    f_u = np.array([0.7, 0.1, math.sqrt(0.5)])
    batch = Batch(
        embeddings=ad.param(np.stack([f_p, f_u]), "f"),
        proxies=ad.constant(np.stack([E1, E2])),
        observed=np.array([[1], [-1]], dtype=np.int8),
    )
    priors = prior_config_from_values([0.5], [0.0], PriorSettings(lam=1.0))
    return batch, priors


def test_pm_risk_hand_computed_fixture() -> None:
    batch, priors = _risk_fixture()
    result = pm_risk_empirical(batch, priors)
    c = result.classes[0]
    assert c.positive_term == pytest.approx(0.218744, abs=1e-6)
    assert c.unlabeled_term == pytest.approx(0.437488, abs=1e-6)
    assert c.correction_term == pytest.approx(0.518744, abs=1e-6)
    assert c.clamped is True
    assert result.l_total == pytest.approx(0.218744, abs=1e-6)


def test_clamped_bracket_contributes_no_gradient() -> None:
    batch, priors = _risk_fixture()
    result = pm_risk_empirical(batch, priors)
    grad = ad.backward(result.objective, {"f": batch.embeddings})["f"]
    # only the positive row feeds the unclamped objective
    assert np.array_equal(grad[1], np.zeros(3))
    assert np.any(grad[0] != 0)


def test_unclamped_risk_keeps_negative_bracket() -> None:
    batch, priors = _risk_fixture()
    result = pm_risk_empirical(batch, priors, clamp=False)
    assert result.l_total == pytest.approx(0.218744 + 0.437488 - 0.518744, abs=1e-6)


def test_zero_labeled_prior_gives_unbiased_coefficients() -> None:
    batch = _batch(seed=4, augmented=False)
    priors = prior_config_from_values([0.3, 0.25, 0.4], [0.0, 0.0, 0.0], PriorSettings(lam=10.0))
    result = pm_risk_empirical(batch, priors)
    _, neg = batch_losses(batch.embeddings, batch.proxies, 10.0)
    positives = batch.positive_mask()
    for i, c in enumerate(result.classes):
        assert c.unlabeled_term == pytest.approx(1.0 * neg.value[~positives[:, i], i].mean(), abs=1e-12)
        assert c.correction_term == pytest.approx(priors.pi()[i] * neg.value[positives[:, i], i].mean(), abs=1e-12)


def test_class_without_positives_keeps_unlabeled_term_only() -> None:
    batch = _batch(seed=5, augmented=False)
    observed = batch.observed.copy()
    observed[:, 1] = -1
    batch = Batch(embeddings=batch.embeddings, proxies=batch.proxies, observed=observed)
    result = pm_risk_empirical(batch, _priors())
    c = result.classes[1]
    assert c.positive_term == 0.0
    assert c.correction_term == 0.0
    assert c.unlabeled_term > 0.0
    assert not c.clamped


def test_batch_of_only_positives_is_degenerate() -> None:
    batch = _batch(seed=6, augmented=False)
    batch = Batch(embeddings=batch.embeddings, proxies=batch.proxies, observed=np.ones_like(batch.observed))
    with pytest.raises(DegenerateBatchError):
        pm_risk_empirical(batch, _priors())


def test_breakdown_invariants() -> None:
    for seed in range(10):
        batch = _batch(seed=seed, augmented=False)
        result = pm_risk_empirical(batch, _priors())
        total = 0.0
        for c in result.classes:
            bracket = c.unlabeled_term - c.correction_term
            assert c.clamped == (bracket < 0)
            contribution = c.positive_term + max(0.0, bracket)
            assert contribution >= c.positive_term
            total += contribution
        assert result.l_total == pytest.approx(total, abs=1e-12)


def test_p2m_without_dropout_equals_pm() -> None:
    batch = _batch(seed=7, augmented=False)
    copy = ad.constant(batch.embeddings.value.copy())
    doubled = Batch(embeddings=batch.embeddings, augmented=copy, proxies=batch.proxies, observed=batch.observed)
    priors = _priors(variant=Variant.P2M)
    assert p2m_risk_empirical(doubled, priors).l_total == pytest.approx(pm_risk_empirical(batch, priors).l_total, abs=1e-12)


def test_p2m_averages_the_two_passes() -> None:
    f = np.array([[0.6, 0.8, 0.0], [0.0, 0.6, 0.8]])
    f_aug = np.array([[0.8, 0.6, 0.0], [0.0, 0.6, 0.8]])
    proxies = np.stack([E3, E1])
    batch = Batch(
        embeddings=ad.constant(f),
        augmented=ad.constant(f_aug),
        proxies=ad.constant(proxies),
        observed=np.array([[1], [-1]], dtype=np.int8),
    )
    priors = prior_config_from_values([0.3], [0.1], PriorSettings(lam=10.0))
    result = p2m_risk_empirical(batch, priors)
    c = priors.classes[0]
    loss_f = softmax_norm_loss(f[0], E1, E3, 10.0).item()
    loss_aug = softmax_norm_loss(f_aug[0], E1, E3, 10.0).item()
    assert result.classes[0].positive_term == pytest.approx(c.gamma * c.pi * (loss_f + loss_aug) / 2, abs=1e-12)


def test_p2m_all_changes_only_the_unlabeled_term() -> None:
    batch = _batch(seed=8)
    p2m = p2m_risk_empirical(batch, _priors(variant=Variant.P2M))
    p2m_all = p2m_risk_empirical(batch, _priors(variant=Variant.P2M_ALL))
    for a, b in zip(p2m.classes, p2m_all.classes):
        assert a.positive_term == b.positive_term
        assert a.correction_term == b.correction_term
        assert a.unlabeled_term != b.unlabeled_term


def test_missing_augmentation_is_usage_error() -> None:
    with pytest.raises(UsageError):
        p2m_risk_empirical(_batch(augmented=False), _priors(variant=Variant.P2M))


def test_mixup_endpoints() -> None:
    f = ad.constant(E1)
    anchor = ad.constant(E2)
    assert np.allclose(mixup_embedding(f, anchor, 1.0).value, E1, atol=1e-9)
    assert np.allclose(mixup_embedding(f, anchor, 0.0).value, E2, atol=1e-9)


def test_mixup_of_orthogonal_vectors() -> None:
    mixed = mixup_embedding(ad.constant(E1), ad.constant(E2), 0.5).value
    assert np.linalg.norm(mixed) == pytest.approx(1.0, abs=1e-12)
    assert float(mixed @ E2) == pytest.approx(0.5 / math.sqrt(0.5), abs=1e-9)
    assert float(mixed @ E2) == pytest.approx(0.70711, abs=1e-5)


def test_mixup_of_opposite_vectors_is_degenerate() -> None:
    with pytest.raises(DegenerateMixError):
        mixup_embedding(ad.constant(E1), ad.constant(-E1), 0.5)


def test_mixup_rejects_mu_outside_unit_interval() -> None:
    with pytest.raises(UsageError):
        mixup_embedding(ad.constant(E1), ad.constant(E2), 1.5)


def test_sample_mu_uniform_for_alpha_one() -> None:
    rng = np.random.default_rng(9)
    draws = np.array([sample_mu(rng, 1.0) for _ in range(100_000)])
    assert 0.497 <= draws.mean() <= 0.503
    assert draws.min() >= 0.0 and draws.max() <= 1.0


def test_sample_mu_concentrates_for_large_alpha() -> None:
    rng = np.random.default_rng(10)
    alpha = 50.0
    draws = np.array([sample_mu(rng, alpha) for _ in range(20_000)])
    assert draws.var() == pytest.approx(1.0 / (8 * alpha + 4), rel=0.05)


@pytest.mark.parametrize("alpha", [0.0, -1.0])
def test_sample_mu_rejects_non_positive_alpha(alpha: float) -> None:
    with pytest.raises(UsageError):
        sample_mu(np.random.default_rng(0), alpha)


def _single_positive_batch(f: np.ndarray) -> Batch:
    return Batch(
        embeddings=ad.constant(np.stack([f, E3])),
        proxies=ad.constant(np.stack([E1, E2])),
        observed=np.array([[1], [-1]], dtype=np.int8),
    )


def test_pmix_with_mu_one_is_mean_positive_loss() -> None:
    batch = _batch(seed=11, augmented=False)
    priors = _priors()
    pos, _ = batch_losses(batch.embeddings, batch.proxies, priors.lam)
    positives = batch.positive_mask()
    expected = sum(pos.value[positives[:, i], i].mean() for i in range(3))
    assert pmix_loss(batch, 1.0, priors).total.item() == pytest.approx(expected, abs=1e-12)


def test_pmix_with_mu_zero_sits_at_the_none_class() -> None:
    priors = prior_config_from_values([0.3], [0.1], PriorSettings(lam=10.0))
    terms = pmix_loss(_single_positive_batch(E2), 0.0, priors)
    assert terms.total.item() == pytest.approx(math.log1p(math.exp(-10.0)), abs=1e-9)


def test_pmix_symmetric_mix_is_ln2() -> None:
    priors = prior_config_from_values([0.3], [0.1], PriorSettings(lam=10.0))
    terms = pmix_loss(_single_positive_batch(E2), 0.5, priors)
    assert terms.total.item() == pytest.approx(math.log(2.0), abs=1e-9)


def test_pmix_without_positives_returns_zero_with_flag() -> None:
    batch = _batch(seed=12, augmented=False)
    batch = Batch(embeddings=batch.embeddings, proxies=batch.proxies, observed=-np.ones_like(batch.observed))
    terms = pmix_loss(batch, 0.4, _priors())
    assert terms.total.item() == 0.0
    assert terms.empty


def test_original_mixup_needs_an_rng() -> None:
    with pytest.raises(UsageError):
        pmix_loss(_batch(seed=13), 0.4, _priors(variant=Variant.P3M_ORI))


def test_original_mixup_differs_from_none_class_mixup() -> None:
    batch = _batch(seed=14)
    ori = pmix_loss(batch, 0.4, _priors(variant=Variant.P3M_ORI), rng=np.random.default_rng(0))
    none_class = pmix_loss(batch, 0.4, _priors(variant=Variant.P3M))
    assert ori.total.item() != pytest.approx(none_class.total.item())


def test_p3m_with_zero_nu_is_p2m() -> None:
    batch = _batch(seed=15)
    total = p3m_total(batch, _priors(variant=Variant.P3M, nu=0.0), mu=0.3)
    p2m = p2m_risk_empirical(batch, _priors(variant=Variant.P2M))
    assert total.l_total == p2m.l_total
    assert total.l_pmix == 0.0


def test_p3m_adds_nu_times_mixup() -> None:
    batch = _batch(seed=16)
    result = p3m_total(batch, _priors(variant=Variant.P3M, nu=0.05), mu=0.3)
    assert result.l_pmix > 0.0
    assert result.l_total - result.l_pm_or_p2m == pytest.approx(0.05 * result.l_pmix, abs=1e-12)
    assert sum(c.mixup_term for c in result.classes) == pytest.approx(result.l_pmix, abs=1e-12)


def test_pm_equals_p2m_when_passes_coincide() -> None:
    base = _batch(seed=17, augmented=False)
    batch = Batch(embeddings=base.embeddings, augmented=base.embeddings, proxies=base.proxies, observed=base.observed)
    pm = p3m_total(batch, _priors(variant=Variant.PM))
    p2m = p3m_total(batch, _priors(variant=Variant.P2M))
    assert pm.l_total == p2m.l_total


def test_mixup_variants_need_mu() -> None:
    with pytest.raises(UsageError):
        p3m_total(_batch(seed=18), _priors(variant=Variant.P3M))
