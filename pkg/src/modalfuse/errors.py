"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PipelineError):
    """An input value violates a documented invariant."""


class ParameterError(ValidationError):
    """A function argument is outside its accepted range."""


class ShapeError(ValidationError):
    """Array shapes are inconsistent with the model or data contract."""


class ParseError(PipelineError):
    """A file could not be parsed; message names the offending line."""


class AlignmentError(PipelineError):
    """Chunk counts disagree across modalities that must stay aligned."""


class DegenerateDataError(PipelineError):
    """Training data cannot support the requested fit (single class, identical rows)."""


class ConvergenceError(PipelineError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(PipelineError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class UndefinedMetricError(PipelineError):
    """A metric denominator is zero (a class is absent from the truth labels)."""


class EmbeddingLookupError(PipelineError, KeyError):
    """A store-backed provider has no vector for the requested content key."""


class TransportError(PipelineError):
    """A remote embedding request failed after retries."""

    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class DataError(PipelineError):
    """Records are structurally valid but incomplete or contradictory."""


class ConfigurationError(PipelineError):
    """An experiment configuration is invalid or internally inconsistent."""


class StageError(PipelineError):
    """A pipeline stage failed; message carries the stage name and context."""
