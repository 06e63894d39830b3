"""Exception hierarchy for the tubenav package."""


class TubenavError(Exception):
    """Base class for all tubenav errors."""


class DimensionMismatchError(TubenavError):
    """Operands have incompatible dimension counts."""


class HorizonError(TubenavError):
    """A time query falls outside a tube's horizon [0, t_p]."""


class InfeasibilityError(TubenavError):
    """No valid tube exists for the requested construction."""


class CannotReplanError(InfeasibilityError):
    """The collision interval leaves no time to replan a tail tube."""


class DegenerateTubeError(TubenavError):
    """Tube boundaries collapsed (lower >= upper)."""


class FunnelViolationError(TubenavError):
    """State sits on or outside a tube boundary."""

    def __init__(self, message, dim=None, time=None):
        super().__init__(message)
        self.dim = dim
        self.time = time


class NumericalBlowupError(TubenavError):
    """Integration produced a non-finite state."""


class NonTerminationError(TubenavError):
    """Negotiation exhausted its iteration budget.

    Carries the negotiation log accumulated so far for diagnosis.
    """

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class ScenarioValidationError(TubenavError):
    """A scenario file violates a structural or set-disjointness requirement."""


class ArtifactError(TubenavError):
    """A required run artifact is missing or unreadable."""
