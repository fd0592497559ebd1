"""
Exception types for the mtwgeo package.

Every exception carries an ``error_code`` string. The same codes appear in the
structured per-item responses of batch operations and in run reports.
"""

from typing import Optional, Tuple


class GeometryError(Exception):
    """Base class for all numerical-geometry failures."""

    error_code = "GEOMETRY_ERROR"


class DomainError(GeometryError, ValueError):
    """A point or stencil lies outside the chart domain."""

    error_code = "DOMAIN_ERROR"


class DegenerateInputError(GeometryError, ValueError):
    """Inputs are linearly dependent, zero, or otherwise degenerate."""

    error_code = "DEGENERATE_INPUT"


class ChartExitError(GeometryError):
    """A trajectory came within the guard margin of the chart boundary."""

    error_code = "CHART_EXIT"


class IntegrationError(GeometryError):
    """The integrated state became non-finite."""

    error_code = "INTEGRATION_ERROR"


class ResolutionError(GeometryError):
    """A sign change could not be resolved on the current grid."""

    error_code = "RESOLUTION_ERROR"


class SplittingError(GeometryError):
    """A Lagrangian subspace is not a graph over the chosen splitting."""

    error_code = "SPLITTING_ERROR"


class UnresolvedCutError(GeometryError):
    """The distance oracle failed inside a cut-time bracket."""

    error_code = "UNRESOLVED_CUT"

    def __init__(self, message: str, bracket: Tuple[float, float]) -> None:
        super().__init__(message)
        self.bracket = bracket


class UnresolvedSectorError(GeometryError):
    """A query direction falls between unresolved domain samples."""

    error_code = "UNRESOLVED_SECTOR"


class InconsistentInputError(GeometryError, ValueError):
    """Inputs contradict an asserted property such as nonfocality."""

    error_code = "INCONSISTENT_INPUT"


class StencilUnsafeError(GeometryError):
    """A finite-difference stencil reaches too close to the cut locus."""

    error_code = "STENCIL_UNSAFE"


class BranchError(GeometryError):
    """Newton continuation diverged or jumped to another branch."""

    error_code = "BRANCH_ERROR"


class HypothesisError(GeometryError):
    """A lemma hypothesis required by a formula does not hold."""

    error_code = "HYPOTHESIS_ERROR"


class KinkError(GeometryError):
    """A derivative was requested at a detected kink."""

    error_code = "KINK"


class PreconditionError(GeometryError, ValueError):
    """An operation precondition is violated."""

    error_code = "PRECONDITION"


class ScenarioError(GeometryError, ValueError):
    """A scenario or manifold declaration could not be parsed or validated."""

    error_code = "INVALID_INPUT"

    def __init__(
        self, message: str, field: Optional[str] = None, line: Optional[int] = None
    ) -> None:
        super().__init__(message)
        self.field = field
        self.line = line
