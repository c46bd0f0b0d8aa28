from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import List

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.training.sweep import SweepSummary, summarize_trend

REQUIRED_COLUMNS = {"seed", "precision", "recall", "f1"}


def load_summary(csv_path: str) -> List[SweepSummary]:
    """Read the mean-over-seeds rows of a sweep CSV (comment lines skipped)."""
    with open(csv_path, "r", encoding="utf-8") as f:
        reader = csv.DictReader(line for line in f if not line.startswith("#"))
        fieldnames = reader.fieldnames or []
        missing = REQUIRED_COLUMNS.difference(fieldnames)
        if missing or len(fieldnames) != len(REQUIRED_COLUMNS) + 1:
            raise ValueError("Missing CSV columns: %s" % ", ".join(sorted(missing or {"<value>"})))
        value_column = fieldnames[0]

        rows: List[SweepSummary] = []
        seeds_per_value: dict[float, int] = {}
        for line in reader:
            value = float(line[value_column])
            if line["seed"] != "mean":
                seeds_per_value[value] = seeds_per_value.get(value, 0) + 1
                continue
            rows.append(
                SweepSummary(
                    value=value,
                    precision=float(line["precision"]),
                    recall=float(line["recall"]),
                    f1=float(line["f1"]),
                    seeds=0,
                )
            )
    return [
        SweepSummary(value=r.value, precision=r.precision, recall=r.recall, f1=r.f1, seeds=seeds_per_value.get(r.value, 0))
        for r in rows
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description="Check the recall/F1 trend of a prior-multiplier sweep.")
    parser.add_argument("--csv", default="data/runs/sweep-multiplier/sweep.csv", help="Path to sweep CSV")
    parser.add_argument("--max-f1-spread", type=float, default=0.10, help="Largest allowed F1 spread across values")
    parser.add_argument("--min-recall-pairs", type=int, default=4, help="Consecutive pairs that must keep recall from falling")
    args = parser.parse_args()

    summary = load_summary(args.csv)
    if not summary:
        print("No summary rows found in %s" % args.csv)
        sys.exit(2)
    trend = summarize_trend(summary)

    print("Sweep Summary")
    for row in sorted(summary, key=lambda r: r.value):
        print(
            "- value=%g seeds=%d precision=%.4f recall=%.4f f1=%.4f"
            % (row.value, row.seeds, row.precision, row.recall, row.f1)
        )
    print("\nTrend")
    print("- f1_spread: %.4f (max %.4f)" % (trend.f1_spread, args.max_f1_spread))
    print("- recall_nondecreasing_pairs: %d/%d (min %d)" % (trend.recall_nondecreasing_pairs, trend.pairs, args.min_recall_pairs))

    ok = trend.f1_spread < args.max_f1_spread and trend.recall_nondecreasing_pairs >= min(args.min_recall_pairs, trend.pairs)
    print("\nResult:", "PASS" if ok else "FAIL")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
