"""Exception hierarchy shared by every hxz module.

The CLI maps these onto exit codes: validation problems exit 2, precision
exhaustion exits 3, any other numerical failure exits 4.
"""


class HxzError(Exception):
    """Base class for all library errors."""

    exit_code = 4


class InvalidInputError(HxzError, ValueError):
    exit_code = 2


class DomainError(InvalidInputError):
    """A query point or parameter lies outside the region where an op is defined."""


class BoundaryError(DomainError):
    """A point lies on (or numerically too close to) the Voronoi diagram."""


class PrecisionError(HxzError):
    """Working precision is exhausted; re-run with more bits."""

    exit_code = 3


class NumericalError(HxzError):
    exit_code = 4


class DegeneratePoleError(NumericalError):
    """Leading Laurent coefficient vanished; the input was not coprime."""


class InconsistentStructureError(NumericalError):
    pass


class NotHyperexponentialError(InvalidInputError):
    pass


class SaddleFailureError(NumericalError):
    pass


class BranchAmbiguityError(DomainError):
    pass


class SingularAmplitudeError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass
