"""Exception types raised across the package."""


class MalabError(Exception):
    """Base class for all package errors."""


class NotPositiveDefiniteError(MalabError, ValueError):
    pass


class SingularHessianError(MalabError, ValueError):
    pass


class DegenerateNormalError(MalabError, ValueError):
    pass


class UnboundedRadiusError(MalabError, ValueError):
    """Raised when a boundary is (numerically) flat somewhere, so 1/min curvature blows up."""


class VanishingGradientError(MalabError, ValueError):
    pass


class StencilUnavailableError(MalabError, ValueError):
    pass


class MissingThirdDerivativeError(MalabError, ValueError):
    pass


class DimensionError(MalabError, ValueError):
    pass


class GridTooCoarseError(MalabError, ValueError):
    pass


class ConvexityLossError(MalabError, RuntimeError):
    pass


class NonConvergenceError(MalabError, RuntimeError):
    """Newton iteration ran out of iterations; ``result`` carries the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(MalabError, ValueError):
    pass


class RegionError(MalabError, ValueError):
    """Sublevel threshold out of range or the region is under-resolved."""


class EmptyBandError(MalabError, ValueError):
    pass
