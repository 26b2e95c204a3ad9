"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems are usage errors,
malformed inputs are data errors, numerical failures get their own code.
"""


class CLDGError(Exception):
    """Base class for all package errors."""


class ConfigError(CLDGError, ValueError):
    """Invalid or infeasible configuration."""


class DataError(CLDGError, ValueError):
    """Problem with input data."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(DataError):
    pass


class FormatError(DataError):
    """Corrupt, truncated or wrong-version binary container."""


class PreconditionError(DataError):
    pass


class NumericError(CLDGError, ArithmeticError):
    pass
