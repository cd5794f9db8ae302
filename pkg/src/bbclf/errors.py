"""Exception types shared across the pipeline."""

from __future__ import annotations


class BbclfError(Exception):
    """Base class for all package-specific errors."""


class ParseError(BbclfError, ValueError):
    """A data file record could not be parsed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(BbclfError, ValueError):
    """Input violates a declared invariant (unknown label, bad config, ...)."""


class InsufficientDataError(BbclfError, ValueError):
    """A class does not have enough examples for the requested split."""


class TemplateError(BbclfError, ValueError):
    """Template application failed (segment arity mismatch, stray mask, ...)."""


class StateError(BbclfError, RuntimeError):
    """Operation called in an illegal state (e.g. double demonstration append)."""


class ContractError(BbclfError, RuntimeError):
    """A backend response violates the wire contract (shape, dimension, NaN)."""


class BackendError(BbclfError, RuntimeError):
    """A backend call failed."""


class RetryableBackendError(BackendError):
    """Transient transport failure; the call may be retried."""


class RequestError(BackendError):
    """The request itself is malformed (e.g. mask position requested, no mask)."""


class TrainingError(BbclfError, RuntimeError):
    """Model training failed."""


class DivergenceError(TrainingError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, learning_rate: float):
        super().__init__(
            f"non-finite loss at epoch {epoch} (learning_rate={learning_rate})"
        )
        self.epoch = epoch
        self.learning_rate = learning_rate


class StageError(BbclfError, RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class AggregationError(BbclfError, ValueError):
    """Seed results are incomplete or inconsistent at aggregation time."""
