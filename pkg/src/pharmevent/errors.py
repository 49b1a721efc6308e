"""Exception types shared across the engine.

Every error raised by the package derives from PharmEventError so callers
can catch one base class. Errors that abort a run because inputs are
malformed derive from ValidationError; errors arising mid-computation
derive from ComputationError (the CLI maps these to exit codes 1 and 2).
"""
from __future__ import annotations


class PharmEventError(Exception):
    """Base class for all package errors."""


class ValidationError(PharmEventError):
    """Bad input data or configuration."""


class ComputationError(PharmEventError):
    """A computation could not be carried out on otherwise valid inputs."""


# --- ingestion -------------------------------------------------------------

class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(ValidationError):
    def __init__(self, dup_id: str):
        self.dup_id = dup_id
        super().__init__(f"duplicate id {dup_id!r}")


class NonPositivePrice(ValidationError):
    def __init__(self, date):
        self.date = date
        super().__init__(f"non-positive close on {date}")


class EmptySeries(ValidationError):
    pass


class LeadingGap(ValidationError):
    pass


class ZeroDenominator(ValidationError):
    def __init__(self, ticker: str, year: int, which: str = ""):
        self.ticker = ticker
        self.year = year
        suffix = f" ({which})" if which else ""
        super().__init__(f"zero denominator for {ticker} {year}{suffix}")


# --- sentiment -------------------------------------------------------------

class EmptyText(ValidationError):
    pass


class DegenerateLabels(ValidationError):
    pass


class IdMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


# --- market ----------------------------------------------------------------

class SeriesTooShort(ValidationError):
    pass


class NoPeaks(ComputationError):
    pass


class OutOfHistory(ValidationError):
    pass


class InsufficientHistory(ValidationError):
    pass


# --- forecast --------------------------------------------------------------

class DegenerateIndex(ComputationError):
    pass


class NonPositivePath(ComputationError):
    pass


class MissingEvent(ValidationError):
    pass


class InvariantViolation(ValidationError):
    pass


# --- impact ----------------------------------------------------------------

class NonFinite(ValidationError):
    pass


class TooFew(ValidationError):
    pass


class ZeroVariance(ComputationError):
    pass


class EmptySample(ValidationError):
    pass


class MissingLabel(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class TooFewForGroups(ValidationError):
    pass


# --- models ----------------------------------------------------------------

class DimensionMismatch(ValidationError):
    pass


class NonFiniteLoss(ComputationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class EmptyFeatures(ValidationError):
    pass


class TooManyFeatures(ValidationError):
    pass


# --- evaluation ------------------------------------------------------------

class ClassTooSmall(ValidationError):
    def __init__(self, label, count: int):
        self.label = label
        self.count = count
        super().__init__(f"class {label!r} has only {count} members")


class SingleClassFold(ComputationError):
    """A class had no positives or no negatives in a fold (reported, not fatal)."""


class InvalidConfig(ValidationError):
    pass


# --- cli / io --------------------------------------------------------------

class NetworkError(ComputationError):
    pass


class SchemaError(ValidationError):
    pass


class StageError(ComputationError):
    """Wraps a failure inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
