"""Exception hierarchy shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit-specific failures."""


class RangeError(ToolkitError):
    """A coordinate or interval falls outside the grid it was asked about."""


class DomainError(ToolkitError):
    """A parameter violates its mathematical domain (e.g. visibility not in [0,1])."""


class ConstructionError(ToolkitError):
    """Invalid physical construction, e.g. overlapping slits."""


class PreconditionError(ToolkitError):
    """A documented operation precondition does not hold."""


class CompletenessError(PreconditionError):
    """Measurement functions fail the completeness relation sum |O(x)|^2 = 1."""


class AtomExtractionError(ToolkitError):
    """The asymptotic mean of a characteristic function failed to stabilize."""


class UnsupportedCaseError(ToolkitError):
    """Request outside the implemented catalog (state family or measurement kind)."""


class UndefinedWeakValueError(ToolkitError):
    """Post-selection amplitude vanishes, so the weak value is undefined."""


class InsufficientStatisticsError(ToolkitError):
    """A Monte-Carlo routine accepted too few samples to report an estimate."""


class ConfidenceNotAttainedError(ToolkitError):
    """The cumulative signed mass never reached the requested confidence level."""
