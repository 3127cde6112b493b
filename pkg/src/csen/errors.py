"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2 and numeric failures exit 3.
"""


class CsenError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class UsageError(CsenError):
    exit_code = 1


class ParameterError(UsageError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class ConfigError(UsageError):
    pass


class DataError(CsenError, ValueError):
    """Input data is missing, malformed or insufficient."""

    exit_code = 2


class DimensionError(DataError):
    pass


class ParseError(DataError):
    pass


class PersistenceError(DataError):
    """A model or report file is truncated, corrupted or inconsistent."""


class NumericError(CsenError, ArithmeticError):
    exit_code = 3


class DegenerateDecisionError(NumericError):
    pass


class TrainingError(NumericError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class UnsupportedOperationError(CsenError, TypeError):
    exit_code = 1
