"""Exceptions raised by the workbench.

Expected numerical outcomes (divergent integrals, inadmissible weights, solver
nonconvergence) are returned as data; these are reserved for broken inputs and
violated preconditions.
"""

from typing import Optional


class WorkbenchError(RuntimeError):
    """Base class for all workbench errors."""


class QuadratureError(WorkbenchError):
    """Integrand evaluated to a non-finite value."""

    def __init__(self, message: str, abscissa: Optional[float] = None):
        """Initialize."""
        super().__init__(message)
        self.abscissa = abscissa


class InvalidWeightError(WorkbenchError):
    """A weight is not positive where positivity is required."""


class PreconditionError(WorkbenchError):
    """An operation was called outside the hypotheses it needs."""


class AssemblyError(WorkbenchError):
    """A weight is not finite on some element of the mesh."""

    def __init__(self, message: str, element: Optional[int] = None):
        """Initialize."""
        super().__init__(message)
        self.element = element


class InfeasibleConstraintError(WorkbenchError):
    """K is nonpositive on every element, so G(u) = 1 has no solution."""


class NoPrincipalEigenvalueError(WorkbenchError):
    """The discrete pencil has no positive eigenvalue."""


class IntegrationError(WorkbenchError):
    """The radial IVP produced a non-finite state."""

    def __init__(self, message: str, radius: float):
        """Initialize."""
        super().__init__(message)
        self.radius = radius


class BracketError(WorkbenchError):
    """A shooting bracket does not straddle the sign event."""
