"""Exception hierarchy shared by every module."""


class GoodhartError(Exception):
    """Base class for all library errors."""


class DomainError(GoodhartError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class MomentDoesNotExist(DomainError):
    """A requested moment is infinite for the given law."""


class QuadratureFailure(GoodhartError, ArithmeticError):
    """Adaptive integration could not meet its tolerance within budget."""


class BracketFailure(GoodhartError, ArithmeticError):
    """Root bracketing found no sign change within its expansion budget."""


class ConfigError(GoodhartError, ValueError):
    """A run configuration violates its invariants."""


class InsufficientSweep(GoodhartError, ValueError):
    """A sweep does not reach deep enough to support a verdict."""


class MissingStdErrors(GoodhartError, ValueError):
    """A comparison needs standard errors the record does not carry."""
