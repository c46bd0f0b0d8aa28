"""Line-delimited JSON dataset files.

Line 1 is a header object; every following line is one sample record.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ValidationError

from src.datagen.generator import FORMAT_VERSION, GenSpec, PuDataset
from src.errors import DatasetParseError, DatasetSchemaError
from src.fileio import atomic_write_text


class DatasetHeader(BaseModel):
    format_version: int
    n: int
    d_in: int
    K: int
    pi_true: list[float]
    erasure: list[float]
    seed: Optional[int] = None
    separation: Optional[float] = None
    noise: Optional[float] = None
    prototype_seed: Optional[int] = None


class DatasetRecord(BaseModel):
    id: int
    x: list[float]
    s: list[Literal[-1, 1]]
    y: Optional[list[Literal[-1, 1]]] = None


def _header_for(dataset: PuDataset) -> DatasetHeader:
    spec = dataset.spec
    if spec is not None:
        return DatasetHeader(
            format_version=FORMAT_VERSION,
            n=dataset.n,
            d_in=dataset.d_in,
            K=dataset.num_classes,
            pi_true=spec.pi_true,
            erasure=spec.erasure,
            seed=spec.seed,
            separation=spec.separation,
            noise=spec.noise,
            prototype_seed=spec.prototype_seed,
        )
    return DatasetHeader(
        format_version=FORMAT_VERSION,
        n=dataset.n,
        d_in=dataset.d_in,
        K=dataset.num_classes,
        pi_true=[],
        erasure=[],
    )


def dumps_dataset(dataset: PuDataset) -> str:
    lines = [_header_for(dataset).model_dump_json(exclude_none=True)]
    for j in range(dataset.n):
        record = {
            "id": j,
            "x": dataset.features[j].tolist(),
            "s": dataset.observed[j].astype(int).tolist(),
        }
        if dataset.truth is not None:
            record["y"] = dataset.truth[j].astype(int).tolist()
        # json float repr round-trips float64 exactly
        lines.append(json.dumps(record, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: PuDataset, path: str | Path) -> Path:
    return atomic_write_text(path, dumps_dataset(dataset))


def _spec_from_header(header: DatasetHeader) -> GenSpec | None:
    if not header.pi_true:
        return None
    try:
        return GenSpec(
            n=header.n,
            d_in=header.d_in,
            num_classes=header.K,
            pi_true=header.pi_true,
            erasure=header.erasure,
            seed=header.seed if header.seed is not None else 0,
            **{
                k: v
                for k, v in (
                    ("separation", header.separation),
                    ("noise", header.noise),
                    ("prototype_seed", header.prototype_seed),
                )
                if v is not None
            },
        )
    except ValidationError as exc:
        raise DatasetSchemaError(f"header does not describe a valid generator spec: {exc}") from exc


def read_dataset(path: str | Path) -> PuDataset:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DatasetParseError(1, "empty dataset file")

    try:
        header = DatasetHeader.model_validate_json(lines[0])
    except ValidationError as exc:
        raise DatasetParseError(1, f"bad header: {exc.errors()[0]['msg']}") from exc
    if header.format_version != FORMAT_VERSION:
        raise DatasetSchemaError(f"unsupported format_version {header.format_version}")

    body = lines[1:]
    if len(body) < header.n:
        raise DatasetParseError(len(body) + 2, f"expected {header.n} records, file ends after {len(body)}")
    if any(line.strip() for line in body[header.n:]):
        raise DatasetParseError(header.n + 2, "unexpected content after the last record")

    features = np.empty((header.n, header.d_in))
    observed = np.empty((header.n, header.K), dtype=np.int8)
    truth = np.empty((header.n, header.K), dtype=np.int8)
    has_truth: bool | None = None
    for j, line in enumerate(body[: header.n]):
        line_no = j + 2
        try:
            record = DatasetRecord.model_validate_json(line)
        except ValidationError as exc:
            raise DatasetParseError(line_no, exc.errors()[0]["msg"]) from exc
        if len(record.x) != header.d_in or len(record.s) != header.K:
            raise DatasetSchemaError(f"line {line_no}: record dimensions disagree with header (d_in={header.d_in}, K={header.K})")
        if has_truth is None:
            has_truth = record.y is not None
        elif has_truth != (record.y is not None):
            raise DatasetSchemaError(f"line {line_no}: truth labels present on some records only")
        if record.y is not None:
            if len(record.y) != header.K:
                raise DatasetSchemaError(f"line {line_no}: y has {len(record.y)} entries, expected {header.K}")
            truth[j] = record.y
        features[j] = record.x
        observed[j] = record.s

    return PuDataset(
        features=features,
        observed=observed,
        truth=truth if has_truth else None,
        spec=_spec_from_header(header),
    )
