"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so raise the most specific
class that applies.
"""


class SedLabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SedLabError, ValueError):
    """An argument violates an operation's preconditions."""


class ConfigError(SedLabError, ValueError):
    """A configuration file or option set is inconsistent or unsupported."""


class DataError(SedLabError):
    """On-disk data is missing, malformed, or fails a schema check."""


class FormatError(DataError):
    """A binary or CSV artifact could not be parsed."""


class NumericError(SedLabError):
    """A numeric procedure left its domain (divergence, empty tail, ...)."""


class TrainingDivergenceError(NumericError):
    """Training produced a non-finite loss or gradient.

    Carries a diagnostic snapshot (step index, loss parts) so the caller
    can dump state for inspection.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = dict(snapshot or {})
