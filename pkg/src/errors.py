from __future__ import annotations


class P3MError(Exception):
    """Base class for every error raised by this package."""


class UsageError(P3MError, ValueError):
    pass


class NumericError(P3MError, ArithmeticError):
    def __init__(self, op: str, message: str | None = None):
        self.op = op
        super().__init__(message or f"non-finite value produced by op '{op}'")


class PriorDomainError(P3MError, ValueError):
    pass


class ConfigError(P3MError, ValueError):
    pass


class DegenerateBatchError(P3MError):
    pass


class DegenerateMixError(P3MError):
    pass


class DatasetParseError(P3MError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DatasetSchemaError(P3MError):
    pass


class TrainingDivergedError(P3MError):
    def __init__(self, last_finite_step: int, message: str):
        self.last_finite_step = last_finite_step
        super().__init__(f"{message} (last finite step: {last_finite_step})")


class VerificationError(P3MError):
    pass
