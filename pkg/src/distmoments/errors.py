"""Exception hierarchy shared across the package."""


class DistMomentsError(Exception):
    """Base class for all package errors."""


class MetricStructureError(DistMomentsError, ValueError):
    """Distance data has the wrong shape or is otherwise malformed."""


class MetricViolationError(DistMomentsError, ValueError):
    """Distances do not satisfy the metric axioms."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DegenerateOptimumError(DistMomentsError, ValueError):
    """The optimal social cost is zero, so approximation ratios are undefined."""


class EnumerationInfeasibleError(DistMomentsError, ValueError):
    """Exact enumeration would exceed the configured work cap."""


class ElectionError(DistMomentsError, ValueError):
    """Base class for participatory-budgeting input problems."""


class DuplicateProjectError(ElectionError):
    pass


class UnknownProjectError(ElectionError):
    pass


class InfeasibleBallotError(ElectionError):
    pass


class ConfigError(DistMomentsError, ValueError):
    """Invalid experiment configuration. ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
