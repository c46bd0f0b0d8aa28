from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError

from src.errors import DatasetSchemaError, UsageError
from src.fileio import atomic_write_text
from src.model.encoder import ModelParams

PARAMS_FORMAT_VERSION = 1


class ParamsFile(BaseModel):
    format_version: int
    dims: list[int]
    num_classes: int
    arrays: dict[str, list]


def dumps_params(params: ModelParams) -> str:
    document = {
        "format_version": PARAMS_FORMAT_VERSION,
        "dims": params.dims,
        "num_classes": params.num_classes,
        "arrays": {name: value.tolist() for name, value in params.to_dict().items()},
    }
    return json.dumps(document, separators=(",", ":")) + "\n"


def write_params(params: ModelParams, path: str | Path) -> Path:
    return atomic_write_text(path, dumps_params(params))


def read_params(path: str | Path) -> ModelParams:
    try:
        document = ParamsFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise DatasetSchemaError(f"invalid params file {path}: {field}: {first['msg']}") from exc
    if document.format_version != PARAMS_FORMAT_VERSION:
        raise DatasetSchemaError(f"unsupported params format_version {document.format_version}")
    try:
        params = ModelParams.from_dict({name: np.asarray(value, dtype=np.float64) for name, value in document.arrays.items()})
    except (UsageError, ValueError) as exc:
        raise DatasetSchemaError(f"invalid params file {path}: {exc}") from exc
    if params.dims != document.dims or params.num_classes != document.num_classes:
        raise DatasetSchemaError(f"params file {path}: arrays disagree with declared dims")
    return params
