"""Exception hierarchy shared across the toolkit.

ValidationError subclasses map to CLI exit code 2, NumericError to 3,
plain OSError (file problems) to 1.
"""


class ValidationError(ValueError):
    """Invalid input data, configuration, or contract violation."""


class ParseError(ValidationError):
    """A file cell could not be parsed; message carries the row number."""


class SpacingError(ValidationError):
    """Timestamp grid is not uniform 1-minute spacing."""


class DuplicateTimestampError(ValidationError):
    """Two rows share the same timestamp."""


class LeakageError(ValidationError):
    """Fault-labelled or non-training data reached a fit step."""


class ModelFormatError(ValidationError):
    """Model file is truncated, inconsistent, or has an unknown schema."""


class NumericError(ArithmeticError):
    """A numeric computation produced non-finite or singular results."""
