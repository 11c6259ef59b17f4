"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``code`` that the HTTP layer
serializes and the CLI maps onto its exit-code contract (0 ok, 2 parse,
3 shape, 4 stalled, 1 anything else).
"""

from __future__ import annotations


class CkalabError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class ParseError(CkalabError):
    """Input bytes could not be decoded as a matrix or mask file."""

    code = "parse"


class InvalidMatrix(CkalabError):
    """Matrix violates a structural invariant (shape, finiteness, flags)."""

    code = "invalid_matrix"


class NotCentered(CkalabError):
    """Operation requires a column-centered matrix."""

    code = "not_centered"


class ShapeMismatch(CkalabError):
    """Operands have incompatible shapes."""

    code = "shape"


class DegenerateData(CkalabError):
    """Data carries no usable signal (constant rows, zero spectrum, ...)."""

    code = "degenerate"


class InvalidBandwidth(CkalabError):
    """RBF bandwidth is missing or non-positive."""

    code = "bandwidth"


class TooFewSamples(CkalabError):
    """Estimator needs more rows than were provided."""

    code = "too_few_samples"


class InvalidRho(CkalabError):
    """Subset fraction outside the open interval (0, 1)."""

    code = "invalid_rho"


class InvalidSubset(CkalabError):
    """Subset mask is empty, full, or out of range."""

    code = "invalid_subset"


class InvalidDirection(CkalabError):
    """Translation direction is not a unit vector of the right length."""

    code = "invalid_direction"


class NoOrthogonalDirection(CkalabError):
    """No direction orthogonal to the hyperplane normal exists (p = 1)."""

    code = "no_orthogonal_direction"


class InvertibilityFailure(CkalabError):
    """Rejection sampling failed to produce an invertible matrix."""

    code = "invertibility"


class Stalled(CkalabError):
    """Optimizer made no progress while above tolerance.

    Carries the iteration trace accumulated so far so callers can still
    persist it.
    """

    code = "stalled"

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
