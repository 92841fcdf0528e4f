"""Exception types shared across the package."""


class KSLabError(Exception):
    """Base class for all package-specific errors."""


class GridTooCoarse(KSLabError):
    """Grid has too few nodes for the requested stencil or norm."""


class LengthMismatch(KSLabError):
    """Array length does not match the grid it claims to live on."""


class GridMismatch(KSLabError):
    """Two objects that must share a grid do not."""


class CompatibilityViolation(KSLabError):
    """Initial profile is incompatible with the boundary data at t=0."""


class SingularSystem(KSLabError):
    """Banded one-step system could not be factorized (zero pivot)."""


class NoConvergence(KSLabError):
    """Fixed-point iteration failed to contract within the allowed budget."""


class ZeroDenominator(KSLabError):
    """A ratio was requested with an identically zero denominator."""


class HypothesisViolation(KSLabError):
    """Carleman weight hypotheses fail for the supplied coefficients.

    ``failed`` lists the names of the violated hypotheses.
    """

    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = tuple(failed)


class LayerViolation(KSLabError):
    """Test function is not negligible inside the singular time layers."""


class InfConditionViolated(KSLabError):
    """Reference trajectory snapshot curvature falls below the required floor."""


class ConfigError(KSLabError):
    """Run configuration failed to parse or validate."""
