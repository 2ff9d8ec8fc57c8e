"""Exception types raised across the package."""


class SparseBallotError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(SparseBallotError, ValueError):
    pass


class DegenerateVectorError(SparseBallotError, ValueError):
    """A vector too close to zero to be normalized."""


class CapacityError(SparseBallotError, ValueError):
    """A dense tensor or enumeration would exceed the configured budget."""


class NotExactError(SparseBallotError):
    """The population has no closed-form moment at the requested order."""


class UnsupportedPopulationError(SparseBallotError, TypeError):
    pass


class WrongEstimatorError(SparseBallotError, ValueError):
    """Dataset arity or response model does not match the estimator."""


class BlindSpotError(SparseBallotError, ValueError):
    """The graded threshold sits where the order-k inversion coefficient vanishes."""

    def __init__(self, k: int, tau: float, value: float):
        self.k = k
        self.tau = tau
        self.value = value
        super().__init__(
            f"threshold tau={tau!r} is a blind spot for order k={k} "
            f"(lambda_{{k,0}}={value:.3e})"
        )


class PrecomputationRequired(SparseBallotError, KeyError):
    """Harmonic decompositions for (d, k) have not been warmed."""


class NormalizationError(SparseBallotError, ArithmeticError):
    """A quadrature constant that must be nonzero came out (numerically) zero."""


class DegenerateLinkError(SparseBallotError, ValueError):
    pass


class InternalConsistencyError(SparseBallotError, RuntimeError):
    pass


class ConfigError(SparseBallotError, ValueError):
    """An experiment configuration names an invalid combination."""
