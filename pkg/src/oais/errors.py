"""Exception types raised across the package."""


class OAISError(Exception):
    """Base class for all package errors."""


class ContractError(OAISError, ValueError):
    """Inputs violate an operation's preconditions (shapes, ranges)."""


class NonFiniteError(OAISError, FloatingPointError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateEnsembleError(OAISError):
    """Every importance weight is zero."""


class UnsupportedEstimatorError(OAISError):
    """The requested gradient estimator needs something the target lacks."""


class UnsupportedDimensionError(OAISError):
    """Quadrature was requested in more than two dimensions."""


class HeavyTailError(OAISError):
    """The chi-square integrand does not decay inside the quadrature box."""


class DivergenceError(OAISError):
    """An optimizer iterate left the admissible region."""

    def __init__(self, message, iteration=None, theta_norm=None):
        super().__init__(message)
        self.iteration = iteration
        self.theta_norm = theta_norm


class ConfigError(OAISError, ValueError):
    """A run configuration is malformed."""


class QuadratureWarning(UserWarning):
    """The quadrature box may truncate the integrand."""
