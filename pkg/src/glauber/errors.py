"""Exception hierarchy shared by every module."""


class GlauberError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(GlauberError, ValueError):
    """A point or argument lies outside the domain of an operation."""


class ModelError(GlauberError, ValueError):
    """The model parameters do not satisfy a condition the operation needs."""


class ParameterError(GlauberError, ValueError):
    """A run or estimation parameter is invalid (empty samples, zero spacing, ...)."""


class AccuracyError(GlauberError, ArithmeticError):
    """A quadrature could not reach its requested tolerance."""


class CapacityError(GlauberError, MemoryError):
    """A discrete oracle instance is too large to build."""


class NumericalError(GlauberError, ArithmeticError):
    """A linear-algebra step failed its residual or symmetry check."""


class EstimationError(GlauberError, ArithmeticError):
    """A statistical estimate is undefined (zero variance, no decay, ...)."""


class CoalescenceError(GlauberError, RuntimeError):
    """Coupling from the past did not coalesce within the allowed window."""


class ConfigError(GlauberError, ValueError):
    """A run configuration file is malformed or fails schema validation."""
