"""Exception types shared across the package."""


class FieldError(Exception):
    """Base class for all package errors."""


class ConfigError(FieldError, ValueError):
    """Invalid parameters or configuration."""


class DomainError(FieldError, ValueError):
    """Argument outside the domain of an operation."""


class SizeError(FieldError):
    """Problem too large for a dense computation."""


class NumericError(FieldError, ArithmeticError):
    """Factorization, solve or estimation failure."""


class PreconditionError(FieldError, ValueError):
    """Hypotheses of a comparison inequality are violated."""
