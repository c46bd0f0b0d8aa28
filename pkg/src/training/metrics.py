from __future__ import annotations

import numpy as np
from sklearn.metrics import multilabel_confusion_matrix

from src.config.schemas import ClassCounts, MetricsReport
from src.datagen.generator import PuDataset
from src.errors import UsageError
from src.model.encoder import ModelParams, predict_labels


def safe_div(num: float, den: float) -> float:
    if den == 0:
        return 0.0
    return num / den


def micro_report(expected: np.ndarray, predicted: np.ndarray) -> MetricsReport:
    """Micro precision/recall/F1 pooled over every (sample, class) decision.

    ``expected`` and ``predicted`` are boolean (n, K) matrices. Undefined
    ratios are reported as 0.
    """
    expected = np.asarray(expected, dtype=bool)
    predicted = np.asarray(predicted, dtype=bool)
    if expected.shape != predicted.shape or expected.ndim != 2:
        raise UsageError(f"label matrices disagree: {expected.shape} vs {predicted.shape}")
    if expected.shape[0] == 0:
        raise UsageError("cannot evaluate an empty dataset")

    # per class: [[tn, fp], [fn, tp]]
    if expected.shape[1] == 1:
        # a single column reads as binary targets, not as a label matrix
        matrices = multilabel_confusion_matrix(expected[:, 0].astype(int), predicted[:, 0].astype(int), labels=[1])
    else:
        matrices = multilabel_confusion_matrix(expected.astype(int), predicted.astype(int))
    per_class = [
        ClassCounts(index=i + 1, tp=int(m[1, 1]), fp=int(m[0, 1]), fn=int(m[1, 0]))
        for i, m in enumerate(matrices)
    ]
    tp = sum(c.tp for c in per_class)
    fp = sum(c.fp for c in per_class)
    fn = sum(c.fn for c in per_class)

    precision = safe_div(tp, tp + fp)
    recall = safe_div(tp, tp + fn)
    f1 = safe_div(2 * precision * recall, precision + recall)
    return MetricsReport(precision=precision, recall=recall, f1=f1, per_class=per_class)


def evaluate(params: ModelParams, dataset: PuDataset) -> MetricsReport:
    if dataset.truth is None:
        raise UsageError("evaluation needs a dataset with true labels")
    if dataset.d_in != params.dims[0] or dataset.num_classes != params.num_classes:
        raise UsageError(
            f"dataset (d_in={dataset.d_in}, K={dataset.num_classes}) does not match "
            f"params (d_in={params.dims[0]}, K={params.num_classes})"
        )
    return micro_report(dataset.truth == 1, predict_labels(dataset.features, params))


def format_report(report: MetricsReport) -> str:
    """Aligned plain-text table of a metrics report."""
    lines = [
        f"{'metric':<10}{'value':>10}",
        f"{'precision':<10}{report.precision:>10.4f}",
        f"{'recall':<10}{report.recall:>10.4f}",
        f"{'f1':<10}{report.f1:>10.4f}",
        "",
        f"{'class':>5}{'tp':>8}{'fp':>8}{'fn':>8}",
    ]
    for c in report.per_class:
        lines.append(f"{c.index:>5}{c.tp:>8}{c.fp:>8}{c.fn:>8}")
    return "\n".join(lines) + "\n"
