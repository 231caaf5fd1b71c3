"""Exception hierarchy shared by the library and the CLI."""


class BHTSError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BHTSError, ValueError):
    """Invalid configuration or hyperparameters."""

    exit_code = 2


class ValidationError(BHTSError, ValueError):
    """Input data violates a documented invariant."""

    exit_code = 3


class ParseError(ValidationError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(BHTSError, ArithmeticError):
    """Degenerate numerical situation (zero variance, empty selection, ...)."""

    exit_code = 4
