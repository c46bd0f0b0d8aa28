"""Command implementations behind the CLI; each one reads inputs, runs, and writes files atomically."""
from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from src.autodiff import graph as ad
from src.config.schemas import ExperimentConfig, MetricsReport, preset
from src.datagen.generator import PuDataset, generate
from src.datagen.storage import read_dataset, write_dataset
from src.errors import UsageError, VerificationError
from src.fileio import atomic_write_text
from src.jobs.grad_check import BackwardFn, GradCheckReport, run_grad_check
from src.model.storage import read_params, write_params
from src.telemetry import log_event
from src.training.metrics import evaluate, format_report
from src.training.sweep import SWEEPABLE, SweepTable, sweep_hyperparameter
from src.training.trainer import train

SWEEP_FIELDS = ("seed", "precision", "recall", "f1")


@dataclass(frozen=True)
class TrainOutputs:
    params_path: Path
    metrics_path: Path
    table_path: Path
    steps_path: Path
    report: MetricsReport


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


@contextmanager
def command_status(command: str, **fields: object) -> Iterator[None]:
    started_at = _timestamp()
    status = "SUCCESS"
    error_message: Optional[str] = None
    try:
        yield
    except Exception as exc:
        status = "FAILED"
        error_message = str(exc)
        raise
    finally:
        log_event(
            "command_status",
            command=command,
            status=status,
            error=error_message,
            started_at=started_at,
            finished_at=_timestamp(),
            **fields,
        )


def prior_summary(dataset: PuDataset) -> str:
    lines = [f"{'class':>5}{'pi_true':>10}{'true_frac':>11}{'observed':>10}"]
    spec_pi = dataset.spec.pi_true if dataset.spec is not None else [float("nan")] * dataset.num_classes
    for i in range(dataset.num_classes):
        true_frac = float(np.mean(dataset.truth[:, i] == 1)) if dataset.truth is not None else float("nan")
        observed = float(np.mean(dataset.observed[:, i] == 1))
        lines.append(f"{i + 1:>5}{spec_pi[i]:>10.4f}{true_frac:>11.4f}{observed:>10.4f}")
    return "\n".join(lines) + "\n"


def cmd_gen_data(config: ExperimentConfig, out: Path, test: bool = False) -> str:
    with command_status("gen-data", out=str(out), test=test):
        spec = config.test_spec() if test else config.gen
        dataset = generate(spec)
        write_dataset(dataset, out)
        log_event("dataset_generated", path=str(out), n=dataset.n, seed=spec.seed, test=test)
        return prior_summary(dataset)


def write_report(report: MetricsReport, out_dir: Path, stem: str) -> tuple[Path, Path]:
    json_path = atomic_write_text(out_dir / f"{stem}.json", report.model_dump_json(indent=2) + "\n")
    table_path = atomic_write_text(out_dir / f"{stem}.txt", f"# generated_at {_timestamp()}\n" + format_report(report))
    return json_path, table_path


def cmd_train(config: ExperimentConfig, dataset_path: Path, out_dir: Path) -> TrainOutputs:
    with command_status("train", dataset=str(dataset_path), out=str(out_dir), variant=config.train.variant.value):
        dataset = read_dataset(dataset_path)
        params, report = train(config.train, dataset)
        params_path = write_params(params, out_dir / "params.json")
        metrics_path, table_path = write_report(report, out_dir, "metrics")
        lines = [json.dumps({"generated_at": _timestamp()})]
        lines.extend(record.model_dump_json() for record in report.step_log)
        steps_path = atomic_write_text(out_dir / "steps.jsonl", "\n".join(lines) + "\n")
        return TrainOutputs(
            params_path=params_path,
            metrics_path=metrics_path,
            table_path=table_path,
            steps_path=steps_path,
            report=report,
        )


def cmd_eval(params_path: Path, dataset_path: Path, out_dir: Path) -> MetricsReport:
    with command_status("eval", params=str(params_path), dataset=str(dataset_path), out=str(out_dir)):
        params = read_params(params_path)
        report = evaluate(params, read_dataset(dataset_path))
        write_report(report, out_dir, "eval_metrics")
        return report


def sweep_csv(table: SweepTable) -> str:
    """Per-cell rows followed by one mean-over-seeds row per value (seed column 'mean')."""
    lines = [f"# generated_at {_timestamp()}", ",".join((table.param, *SWEEP_FIELDS))]
    for cell in table.cells:
        lines.append(f"{cell.value:g},{cell.seed},{cell.precision:.6f},{cell.recall:.6f},{cell.f1:.6f}")
    for row in table.summary:
        lines.append(f"{row.value:g},mean,{row.precision:.6f},{row.recall:.6f},{row.f1:.6f}")
    return "\n".join(lines) + "\n"


def sweep_audit(table: SweepTable) -> str:
    rows = [
        {
            table.param: cell.value,
            "seed": cell.seed,
            "precision": cell.precision,
            "recall": cell.recall,
            "f1": cell.f1,
            "priors": cell.priors.model_dump(mode="json"),
        }
        for cell in table.cells
    ]
    return json.dumps({"param": table.param, "rows": rows}, indent=2) + "\n"


def cmd_sweep(
    config: ExperimentConfig,
    out_dir: Path,
    dataset_path: Optional[Path] = None,
    test_dataset_path: Optional[Path] = None,
    param: str = "multiplier",
    values: Optional[Sequence[float]] = None,
) -> SweepTable:
    with command_status("sweep", out=str(out_dir), param=param):
        if param not in SWEEPABLE:
            raise UsageError(f"cannot sweep '{param}' (choose from {', '.join(SWEEPABLE)})")
        train_set = read_dataset(dataset_path) if dataset_path else generate(config.gen)
        eval_set = read_dataset(test_dataset_path) if test_dataset_path else generate(config.test_spec())
        if values is None:
            values = config.sweep.multipliers if param == "multiplier" else [getattr(config.train.priors, param)]
        table = sweep_hyperparameter(config.train, param, values, train_set, eval_set, config.sweep.seeds)
        atomic_write_text(out_dir / "sweep.csv", sweep_csv(table))
        atomic_write_text(out_dir / "sweep.json", sweep_audit(table))
        return table


def cmd_grad_check(config: ExperimentConfig, backward_fn: BackwardFn = ad.backward) -> GradCheckReport:
    with command_status("grad-check"):
        report = run_grad_check(config.grad_check, config.train.priors, backward_fn=backward_fn)
        if not report.passed:
            failed = [v.variant.value for v in report.variants if not v.passed(report.tolerance)]
            raise VerificationError(f"gradient check failed for: {', '.join(failed)}\n{report.format()}")
        return report


def cmd_print_config(preset_name: Optional[str] = None) -> str:
    config = preset(preset_name) if preset_name else ExperimentConfig()
    return config.model_dump_json(indent=2) + "\n"
