"""Exception types raised by the simulator."""


class DimensionError(ValueError):
    """Operands do not live on the same truncated space."""


class NotHermitianError(ValueError):
    """A matrix expected to be Hermitian is not, within tolerance."""


class InvalidDensityError(ValueError):
    """A density matrix fails Hermiticity, trace or positivity checks."""


class InvalidParamsError(ValueError):
    """Physical parameters outside their admissible range."""


class LeakageError(RuntimeError):
    """Population reached the Fock cutoff; the truncated dynamics is unreliable."""

    def __init__(self, message, t=None, leakage=None):
        super().__init__(message)
        self.t = t
        self.leakage = leakage


class NonFiniteStateError(RuntimeError):
    """A trajectory produced NaN or Inf entries."""

    def __init__(self, message, trajectory=None, step=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.step = step


class EnsembleCollapseError(RuntimeError):
    """Ensemble mean squared norm left the admissible window."""
