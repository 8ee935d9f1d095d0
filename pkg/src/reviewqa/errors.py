"""Exception types shared across the package."""


class ReviewQAError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ReviewQAError):
    """Operands have incompatible shapes or ranks."""


class ParameterError(ReviewQAError):
    """An argument value is outside its legal range."""


class UsageError(ReviewQAError):
    """An operation was invoked in a way its contract forbids."""


class NumericError(ReviewQAError):
    """A computation produced or received non-finite values."""


class ParseError(ReviewQAError):
    """An input file is malformed beyond recovery."""


class DataError(ReviewQAError):
    """Records are internally inconsistent: missing labels, bad rows."""


class ConfigError(ReviewQAError):
    """A run configuration failed validation."""


class InternalError(ReviewQAError):
    """Invariant violation inside the package; indicates a bug."""
