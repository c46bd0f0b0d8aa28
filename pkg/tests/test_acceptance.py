"""End-to-end properties of the estimators and the pipeline.

Everything except the gradient check trains real models and carries the
``slow`` marker; run with ``pytest -m slow``.
"""
import time

import numpy as np
import pytest

from src import main as cli
from src.autodiff import graph as ad
from src.config.schemas import ExperimentConfig, GradCheckSettings, MetricsReport, StepRecord, TrainConfig
from src.datagen.generator import GenSpec, generate
from src.jobs.grad_check import run_grad_check
from src.model.encoder import encode, init_params
from src.pu.losses import Batch, pm_risk_empirical, pnm_risk
from src.pu.priors import PU_VARIANTS, PriorSettings, Variant, prior_config_from_values
from src.training.metrics import evaluate
from src.training.sweep import summarize_trend, sweep_prior_multiplier
from src.training.trainer import train

SEEDS = [62, 63, 64]


def test_gradients_match_finite_differences_for_every_variant() -> None:
    settings = GradCheckSettings(instances=20, batch_size=4, d_in=4, hidden_dims=[6], embed_dim=4, num_classes=2)
    started = time.monotonic()
    report = run_grad_check(settings)
    assert [v.variant for v in report.variants] == list(PU_VARIANTS)
    for check in report.variants:
        assert check.error is None
        assert check.instances == 20
        assert check.max_error < 1e-6, check.variant
    assert time.monotonic() - started < 30.0


@pytest.mark.slow
def test_unclamped_pm_risk_tracks_true_pn_risk() -> None:
    k, pi, rho = 4, 0.2, 0.6
    params = init_params(5, [32, 64, 64, 32], k)
    priors = prior_config_from_values([pi] * k, [pi * (1 - rho)] * k, PriorSettings())
    gaps = []
    for resample in range(50):
        data = generate(GenSpec.uniform(n=20_000, d_in=32, num_classes=k, pi=pi, rho=rho, seed=1000 + resample))
        batch = Batch(
            embeddings=ad.constant(encode(data.features, params)),
            proxies=ad.constant(params.proxies / np.linalg.norm(params.proxies, axis=1, keepdims=True)),
            observed=data.observed,
            truth=data.truth,
        )
        pu = pm_risk_empirical(batch, priors, clamp=False, class_weight=False).l_total
        pn = pnm_risk(batch, priors).l_total
        gaps.append(abs(pu - pn))
    assert np.mean(gaps) < 0.02


def _experiment() -> tuple[ExperimentConfig, object, object]:
    config = ExperimentConfig()
    return config, generate(config.gen), generate(config.test_spec())


def _mean_scores(config: TrainConfig, train_set, test_set) -> tuple[float, float]:
    f1s, recalls = [], []
    for seed in SEEDS:
        params, _ = train(config.with_overrides(seed=seed), train_set)
        report = evaluate(params, test_set)
        f1s.append(report.f1)
        recalls.append(report.recall)
    return float(np.mean(f1s)), float(np.mean(recalls))


@pytest.mark.slow
def test_p3m_beats_naive_baseline_on_incomplete_labels() -> None:
    config, train_set, test_set = _experiment()
    base = config.train.with_overrides(multiplier=3.0)
    p3m_f1, p3m_recall = _mean_scores(base.with_overrides(variant=Variant.P3M), train_set, test_set)
    pn_f1, pn_recall = _mean_scores(base.with_overrides(variant=Variant.PN), train_set, test_set)
    assert p3m_f1 - pn_f1 >= 0.10
    assert p3m_recall - pn_recall >= 0.15


@pytest.mark.slow
def test_prior_multiplier_sweep_is_robust() -> None:
    config, train_set, test_set = _experiment()
    table = sweep_prior_multiplier(
        config.train,
        config.sweep.multipliers,
        train_set,
        test_set,
        config.sweep.seeds,
    )
    assert len(table.cells) == 25
    trend = summarize_trend(table.summary)
    assert trend.f1_spread < 0.10
    assert trend.recall_nondecreasing_pairs >= 4


def _pipeline(root, config_path: str) -> None:
    train_path = str(root / "train.jsonl")
    test_path = str(root / "test.jsonl")
    assert cli.main(["gen-data", "--config", config_path, "--out", train_path]) == 0
    assert cli.main(["gen-data", "--config", config_path, "--out", test_path, "--test"]) == 0
    assert cli.main(["train", "--config", config_path, "--dataset", train_path, "--out", str(root / "run")]) == 0
    params = str(root / "run" / "params.json")
    assert cli.main(["eval", "--params", params, "--dataset", test_path, "--out", str(root / "eval")]) == 0
    sweep = ["sweep", "--config", config_path, "--dataset", train_path, "--test-dataset", test_path]
    assert cli.main([*sweep, "--out", str(root / "sweep")]) == 0


def _without_header(path) -> list[str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if lines and ("generated_at" in lines[0]):
        return lines[1:]
    return lines


@pytest.mark.slow
def test_pipeline_reruns_are_identical(tmp_path) -> None:
    config_path = tmp_path / "config.json"
    config_path.write_text(ExperimentConfig().model_dump_json(indent=2), encoding="utf-8")
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        _pipeline(tmp_path / name, str(config_path))

    outputs = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert outputs == sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    for rel in outputs:
        assert _without_header(tmp_path / "a" / rel) == _without_header(tmp_path / "b" / rel), rel

    report = MetricsReport.model_validate_json((tmp_path / "a" / "eval" / "eval_metrics.json").read_text(encoding="utf-8"))
    assert report.reference == "truth"
    MetricsReport.model_validate_json((tmp_path / "a" / "run" / "metrics.json").read_text(encoding="utf-8"))
    for line in _without_header(tmp_path / "a" / "run" / "steps.jsonl"):
        StepRecord.model_validate_json(line)
