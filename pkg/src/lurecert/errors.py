"""Exception hierarchy shared by all lurecert modules."""


class LureError(Exception):
    """Base class for every error raised by lurecert."""


class EigenvalueError(LureError):
    """The eigenvalue solver failed to converge."""


class NotFullColumnRank(LureError):
    """Transfer matrix lacks full normal column rank."""


class ZeroDynamicsError(LureError):
    """The zero-dynamics iteration failed to terminate cleanly."""


class SingularTransform(LureError):
    """A change of coordinates is singular or badly conditioned."""


class PoleProximity(LureError):
    """Evaluation point lies too close to a pole."""


class LmiInfeasible(LureError):
    """The candidate storage does not satisfy the linear matrix inequality."""


class HypothesesViolated(LureError):
    """Parameters fall outside the hypotheses of a closed-form bound."""


class FdiGridError(LureError):
    """Every frequency sample was skipped."""


class DivergenceDetected(LureError):
    """Simulation state left the bounded region; carries the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class RateUnresolvable(LureError):
    """No usable samples above the noise floor; `estimate` holds the +inf sentinel."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ScenarioError(LureError):
    """Malformed or inconsistent scenario / matrix file."""
