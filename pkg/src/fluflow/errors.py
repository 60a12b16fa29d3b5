"""Error taxonomy shared across the toolkit.

Validation problems (bad files, bad schemas, out-of-domain values) carry
exit code 1, numerical failures carry 2.  Plain OSError is left alone and
mapped to 3 at the command-line boundary.
"""


class FluflowError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ValidationError(FluflowError):
    """Input violates a documented precondition."""

    exit_code = 1


class SchemaError(ValidationError):
    """File or object structure is wrong: headers, widths, duplicates."""


class ParseError(ValidationError):
    """A cell could not be parsed; the message carries its location."""


class DomainError(ValidationError):
    """A value lies outside the mathematical domain of an operation."""


class ShapeError(ValidationError):
    """Array dimensions do not line up."""


class RegionLookupError(ValidationError):
    """A requested region code is not present."""


class NoPeriodError(DomainError):
    """The searched band of a spectrum holds no usable peak."""


class CompletionInputError(ValidationError):
    """Matrix completion cannot start, e.g. an empty row or column."""


class NumericError(FluflowError):
    """A numerical routine failed to converge or left its valid range."""

    exit_code = 2


class ConditioningError(NumericError):
    """A design matrix is rank deficient or too ill conditioned."""


class NonContractionError(NumericError):
    """Fixed-point iteration diverged: the flow map is not a contraction."""


class TrainingError(NumericError):
    """Gradient training diverged."""
