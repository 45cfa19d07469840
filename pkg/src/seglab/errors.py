"""Exception types shared across the package."""


class SeglabError(Exception):
    """Base class for all package errors."""


class GeometryError(SeglabError):
    """Invalid geometric configuration (radii, dimensions, grid sizes)."""


class SingularMatrixError(SeglabError):
    """Linear system singular to working tolerance.

    Attributes
    ----------
    pivot_index : int or None
        Index of the offending pivot, when the factorization reports one.
    """

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class NearKernelError(SeglabError):
    """Linearized operator is numerically rank deficient.

    Carries an estimate of the smallest singular value so callers can
    distinguish genuine degeneracy from under-resolution.
    """

    def __init__(self, message, sigma_min=None, eps=None):
        super().__init__(message)
        self.sigma_min = sigma_min
        self.eps = eps


class EigenSolveError(SeglabError):
    """Inverse iteration failed to converge for some requested pair."""

    def __init__(self, message, pair_index=None):
        super().__init__(message)
        self.pair_index = pair_index


class NewtonError(SeglabError):
    """Newton solve failed in a context where failure is fatal."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ValidationError(SeglabError):
    """A solved object violates one of its declared invariants."""


class SeparationError(SeglabError):
    """The limit scalar solution does not separate phases (wrong number of
    interior sign changes, or vanishing interface slope)."""


class ConfigError(SeglabError):
    """Malformed or invalid run configuration."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class PipelineError(SeglabError):
    """A pipeline stage failed; the message names the pipeline and the
    underlying cause, and partial artifacts carry a .partial suffix."""


class InsufficientDataError(SeglabError):
    """A diagnostic fit window contains too few usable nodes."""
