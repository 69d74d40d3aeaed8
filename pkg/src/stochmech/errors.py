"""Exception hierarchy shared by every module of the package."""


class StochMechError(Exception):
    """Base class for all package errors."""


class LatticeError(StochMechError, ValueError):
    """Invalid lattice geometry or out-of-range coordinates."""


class InfeasibleModelError(StochMechError, ValueError):
    """No admissible energy threshold K0 exists for the given potential.

    Raised when ``sup|V| > 2 hbar^2 / (a^2 m)``: the lattice is too coarse
    for the potential.
    """


class NegativeRateError(StochMechError, ValueError):
    """A generator would contain a negative off-diagonal rate."""


class NotMarkovError(StochMechError, ValueError):
    """Input is not a valid Markov generator."""


class DimensionCapError(StochMechError, ValueError):
    """Dense computation requested above the configured dimension cap."""


class ConvergenceError(StochMechError, RuntimeError):
    """Iterative method failed to reach the requested tolerance."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class SectorConstantError(StochMechError, ValueError):
    """(i/hbar) H - L(pi/2) is not a constant multiple of the identity."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AmplificationError(StochMechError, OverflowError):
    """Reconstruction exponent exceeds the configured cap."""


class ZeroProbabilityError(StochMechError, ValueError):
    """Conditioning on an event of (numerically) zero probability."""


class EigenvalueNotFoundError(StochMechError, ValueError):
    """Requested value is not an eigenvalue of the observable."""


class ConfigError(StochMechError, ValueError):
    """Malformed model configuration file; ``key`` is the dotted offending key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
