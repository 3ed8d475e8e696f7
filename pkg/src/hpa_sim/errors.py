"""Exception types shared across the package."""


class HpaSimError(Exception):
    """Base class for package errors."""


class InconsistentConstraint(HpaSimError):
    """Taut dynamics evaluated on a state violating the cable-length constraint."""


class NonFinite(HpaSimError):
    """A computation produced NaN or Inf."""


class NotExtended(HpaSimError):
    """Impact map applied while the cable is shorter than its length."""


class SingularInnovation(HpaSimError):
    """EKF innovation covariance is not invertible."""


class DegenerateForce(HpaSimError):
    """Desired force vector too small to define a direction."""


class DegenerateTension(HpaSimError):
    """Reference acceleration leaves the cable tension undefined."""


class NewtonDiverged(HpaSimError):
    """Implicit integrator Newton iteration failed to converge."""


class QpInfeasible(HpaSimError):
    """QP subproblem could not be solved."""


class ControllerFailure(HpaSimError):
    """Controller raised during a closed-loop run."""


class EmptyTrace(HpaSimError):
    """Metric requested on an empty trace."""


class NoTransitions(HpaSimError):
    """Impact metrics requested on a trace without slack-to-taut events."""
