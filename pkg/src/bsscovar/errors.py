"""Exception hierarchy shared by every module of the toolkit."""


class BssError(Exception):
    """Base class for toolkit errors."""

    category = "runtime"


class DomainError(BssError, ValueError):
    """A parameter lies outside the range where a quantity is defined."""

    category = "validation"


class QuadratureError(BssError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance.

    Attributes
    ----------
    estimate : float
        Best error estimate achieved before giving up.
    """

    def __init__(self, message, estimate=float("nan")):
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")
        self.estimate = estimate


class MatrixSizeError(BssError, MemoryError):
    """Requested covariance matrix exceeds the configured dimension cap."""


class FactorizationError(BssError, RuntimeError):
    """Covariance factorisation failed even after diagonal jitter."""


class ConfigError(BssError, ValueError):
    """Configuration validation failed; carries every problem found."""

    category = "validation"

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
