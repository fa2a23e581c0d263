"""Exception hierarchy shared by every orbitforge module."""


class OrbitForgeError(Exception):
    """Base class for all orbitforge errors."""


class RankDeficient(OrbitForgeError):
    """Input matrix lost column rank beyond the relative tolerance."""


class DimensionError(OrbitForgeError):
    pass


class StepUnderflow(OrbitForgeError):
    """Adaptive integrator step dropped below the hard floor."""


class NonFiniteState(OrbitForgeError):
    """NaN or Inf appeared in the integrated state."""

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"non-finite state encountered at t={self.time:.6g}")


class SingularEvaluation(OrbitForgeError):
    """A design matrix was requested inside its declared singular set."""


class OffOrbit(OrbitForgeError):
    pass


class DecompositionUnavailable(OrbitForgeError):
    pass


class NoValidRadius(OrbitForgeError):
    pass


class WindowTooShort(OrbitForgeError):
    pass


class InsufficientCycles(OrbitForgeError):
    pass


class InvalidInitialState(OrbitForgeError, ValueError):
    pass


class ConfigError(OrbitForgeError, ValueError):
    """Scenario configuration is malformed; message names the field."""
