from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from src.config.schemas import PRESETS, ExperimentConfig, describe_validation_error, load_config
from src.errors import P3MError, TrainingDivergedError, VerificationError
from src.jobs.commands import cmd_eval, cmd_gen_data, cmd_grad_check, cmd_print_config, cmd_sweep, cmd_train
from src.pu.priors import Variant
from src.telemetry import configure_logging
from src.training.metrics import format_report
from src.training.sweep import SWEEPABLE, summarize_trend

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _parse_values(raw: str) -> list[float]:
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{raw}'") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p3m", description="Positive-unlabeled proxy metric learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", default=None, help="ExperimentConfig JSON (defaults when omitted)")
        p.add_argument("--seed", type=int, default=None, help="Override train seed")
        p.add_argument("--variant", choices=[v.value for v in Variant], default=None)
        p.add_argument("--multiplier", type=float, default=None, help="Override prior multiplier")
        return p

    gen = with_config(sub.add_parser("gen-data", help="Generate a synthetic PU dataset"))
    gen.add_argument("--out", required=True, help="Dataset file to write")
    gen.add_argument("--test", action="store_true", help="Generate the test split (n_test, test_seed)")

    tr = with_config(sub.add_parser("train", help="Train a model on a dataset"))
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out", default=None, help="Output directory")

    ev = sub.add_parser("eval", help="Evaluate saved params on a dataset with truth")
    ev.add_argument("--params", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--out", default=None, help="Output directory")

    sw = with_config(sub.add_parser("sweep", help="Prior-multiplier or hyperparameter sweep"))
    sw.add_argument("--dataset", default=None, help="Training dataset (generated from config when omitted)")
    sw.add_argument("--test-dataset", default=None, help="Evaluation dataset (generated from config when omitted)")
    sw.add_argument("--param", choices=SWEEPABLE, default="multiplier")
    sw.add_argument("--values", type=_parse_values, default=None, help="Comma-separated values")
    sw.add_argument("--out", default=None, help="Output directory")

    with_config(sub.add_parser("grad-check", help="Compare analytic and numeric gradients for every variant"))

    pc = sub.add_parser("print-config", help="Print the default (or a preset) config")
    pc.add_argument("--preset", choices=sorted(PRESETS), default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    variant = Variant(args.variant) if args.variant else None
    config.train = config.train.with_overrides(seed=args.seed, variant=variant, multiplier=args.multiplier)
    return config


def run(args: argparse.Namespace) -> int:
    if args.command == "print-config":
        sys.stdout.write(cmd_print_config(args.preset))
        return EXIT_OK
    if args.command == "eval":
        out = Path(args.out) if args.out else ExperimentConfig().output_dir()
        report = cmd_eval(Path(args.params), Path(args.dataset), out)
        sys.stdout.write(format_report(report))
        return EXIT_OK

    config = resolve_config(args)
    if args.command == "gen-data":
        sys.stdout.write(cmd_gen_data(config, Path(args.out), test=args.test))
    elif args.command == "train":
        out = Path(args.out) if args.out else config.output_dir() / config.train.variant.value
        outputs = cmd_train(config, Path(args.dataset), out)
        sys.stdout.write(format_report(outputs.report))
    elif args.command == "sweep":
        out = Path(args.out) if args.out else config.output_dir() / f"sweep-{args.param}"
        table = cmd_sweep(
            config,
            out,
            dataset_path=Path(args.dataset) if args.dataset else None,
            test_dataset_path=Path(args.test_dataset) if args.test_dataset else None,
            param=args.param,
            values=args.values,
        )
        trend = summarize_trend(table.summary)
        sys.stdout.write(
            f"{args.param} sweep: f1_spread={trend.f1_spread:.4f} "
            f"recall_nondecreasing_pairs={trend.recall_nondecreasing_pairs}/{trend.pairs}\n"
        )
    elif args.command == "grad-check":
        report = cmd_grad_check(config)
        sys.stdout.write(report.format())
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (VerificationError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ValidationError as exc:
        print(f"error: {describe_validation_error(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except (P3MError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
