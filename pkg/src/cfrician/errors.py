"""Exception types raised by the package."""


class CellFreeError(Exception):
    """Base class for all errors raised by cfrician."""


class ConfigError(CellFreeError, ValueError):
    """Invalid configuration value or malformed config document.

    ``key`` and ``line`` locate the offending entry when known.
    """

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class NumericalError(CellFreeError, ArithmeticError):
    """A factorization or evaluation produced unusable numbers."""


class DegenerateError(NumericalError):
    """A quantity that must be strictly positive (a normalizer or a
    quotient denominator) is zero."""
