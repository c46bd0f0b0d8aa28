from __future__ import annotations

import os
from pathlib import Path

from src.errors import ConfigError

DEFAULT_OUT_DIR = "data/runs"
DEFAULT_THREADS = 1


def out_dir() -> Path:
    return Path(os.getenv("P3M_OUT_DIR", DEFAULT_OUT_DIR))


def sweep_threads() -> int:
    raw = os.getenv("P3M_THREADS", "").strip()
    if not raw:
        return DEFAULT_THREADS
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"P3M_THREADS must be a positive integer, got {raw!r}") from exc
    if threads < 1:
        raise ConfigError(f"P3M_THREADS must be a positive integer, got {raw!r}")
    return threads


def log_level() -> str:
    return os.getenv("P3M_LOG_LEVEL", "INFO").strip() or "INFO"
