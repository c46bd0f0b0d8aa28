from __future__ import annotations

import json
import logging
import sys

from src.config.settings import log_level

LOGGER_NAME = "p3m"

logger = logging.getLogger(LOGGER_NAME)


def configure_logging(level: str | None = None) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel((level or log_level()).upper())
    logger.propagate = False


def log_event(event: str, level: int = logging.INFO, **fields: object) -> None:
    # One line per event: name followed by a JSON object.
    if not logger.isEnabledFor(level):
        return
    logger.log(level, "%s %s", event, json.dumps(fields, sort_keys=True, default=str))
