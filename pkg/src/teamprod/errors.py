"""Exceptions and warnings shared across the package."""

from __future__ import annotations


class TeamProdError(Exception):
    """Base class for all package errors."""


class RowError(TeamProdError):
    """Error tied to one input row; ``line`` is None when the record was built in code."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingColumn(TeamProdError):
    """The input header lacks a column required by the schema."""


class MalformedRow(RowError):
    """A field could not be parsed or violates a record invariant."""


class NonPositiveTime(RowError):
    """A start or finish time is zero or negative."""


class InvertedSplit(RowError):
    """Finish time is at or before the start split."""


class EmptyIntersection(TeamProdError):
    """No team run survives the solo-record linkage; the datasets do not overlap."""


class DegenerateDesign(TeamProdError):
    """The factor structure is unidentifiable beyond the chosen normalization."""


class NonFinite(TeamProdError):
    """Input contains NaN or infinity."""


class InsufficientSupport(TeamProdError):
    """Total kernel weight is numerically zero; the target lies outside the data support."""


class EmptyTaskSlice(TeamProdError):
    """A (task, attempt) slice is empty or too small to estimate."""


class RankDeficient(TeamProdError):
    """Polynomial regressors are collinear."""


class NonPositiveOutput(TeamProdError):
    """Output must be strictly positive to evaluate elasticities."""


class InvalidConfig(TeamProdError):
    """A generator configuration violates its invariants."""


class SparseCell(TeamProdError):
    """An exact (x, y) cell has too few observations for a brute-force rank."""


class ConfigError(TeamProdError):
    """Pipeline configuration is missing or inconsistent."""


class StageError(TeamProdError):
    """A pipeline stage failed; carries the stage name and the underlying error."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class NotConvergedWarning(UserWarning):
    """Alternating projections hit max_iterations; the fit is returned with converged=False."""


class DegenerateScaleWarning(UserWarning):
    """Normalization anchor coincides with the slice minimum; unit-slope fallback applied."""
