"""
Exception hierarchy for posi_bounds.

Every error carries the exit code the command-line front end reports for it:
2 for usage/validation problems, 3 for numeric failures and 4 for I/O.
"""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class PosiError(Exception):
    """Base class for all errors raised by the toolkit."""

    exit_code = EXIT_USAGE

    @property
    def reason(self) -> str:
        """One-line machine-parsable reason, e.g. ``NoRootError: ...``."""
        message = " ".join(str(self).split())
        return f"{type(self).__name__}: {message}"


# ---------------------------------------------------------------- validation
class DomainError(PosiError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(PosiError, ValueError):
    """A run configuration or ensemble spec could not be parsed or validated."""


class InvalidFamilyError(PosiError, ValueError):
    pass


class NotSymmetricError(PosiError, ValueError):
    pass


class NegativeDiagonalError(PosiError, ValueError):
    pass


class InvalidCorrelationError(PosiError, ValueError):
    pass


class InvalidKError(PosiError, ValueError):
    pass


class ZeroColumnError(PosiError, ValueError):
    pass


class KappaOutOfRangeError(PosiError, ValueError):
    pass


class DeltaOutOfRangeError(PosiError, ValueError):
    pass


class QLessThanTwoError(PosiError, ValueError):
    pass


class TooFewRepsError(PosiError, ValueError):
    pass


# ------------------------------------------------------------------- numeric
class EnumerationLimitError(PosiError, RuntimeError):
    exit_code = EXIT_NUMERIC


class NoRootError(PosiError, RuntimeError):
    exit_code = EXIT_NUMERIC


class ModelRankDeficientError(PosiError, ArithmeticError):
    """A selected model's columns are numerically collinear."""

    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, model=()):
        super().__init__(message)
        self.model = tuple(model)


# ----------------------------------------------------------------------- I/O
class DesignFileError(PosiError, OSError):
    exit_code = EXIT_IO
