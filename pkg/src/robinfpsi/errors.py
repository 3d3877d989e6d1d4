"""Exception hierarchy shared by all solver components.

Every error raised on purpose by this package derives from
:class:`RobinFpsiError`, so the CLI can map failures to a stable,
machine-parsable error class name.
"""


class RobinFpsiError(Exception):
    """Base class for all package errors."""


class GeometryError(RobinFpsiError):
    """Degenerate or otherwise invalid input geometry."""


class MarkingIncompleteError(RobinFpsiError):
    """A boundary edge was not covered by any marking predicate."""


class AmbiguousMarkingError(RobinFpsiError):
    """A boundary edge matched more than one marking predicate."""


class InterfaceMismatchError(RobinFpsiError):
    """Fluid and solid interface curves disagree geometrically."""


class TangledMeshError(RobinFpsiError):
    """A deformation produced a triangle with non-positive area."""


class DimensionError(RobinFpsiError):
    """An array argument has the wrong length or shape."""


class CapabilityError(RobinFpsiError):
    """A requested feature (e.g. quadrature order) is unsupported."""


class DomainError(RobinFpsiError):
    """A point argument lies outside the valid reference domain."""


class ConstraintConflictError(RobinFpsiError):
    """The same dof was constrained twice with different values."""


class SingularSystemError(RobinFpsiError):
    """Sparse factorization failed; carries a pivot hint when known."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SolverError(RobinFpsiError):
    """A linear solve violated its residual contract."""


class EvaluationError(RobinFpsiError):
    """A user-supplied function returned a non-finite value."""


class CouplingDataError(RobinFpsiError):
    """Robin interface data is missing or incomplete."""


class SynchronizationError(RobinFpsiError):
    """Subproblem states carry mismatched step indices."""


class InsufficientHistoryError(RobinFpsiError):
    """An accumulated energy quantity was requested without history."""


class ConfigError(RobinFpsiError):
    """Invalid configuration file content; names the key and line."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class ResourceGuardError(RobinFpsiError):
    """A run was refused because it exceeds the desk-scale guard."""
