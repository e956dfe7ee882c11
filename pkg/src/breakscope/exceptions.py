"""Exception hierarchy shared by all breakscope modules."""


class BreakscopeError(Exception):
    """Base class for library errors."""


class DataError(BreakscopeError, ValueError):
    """Input data violates a structural precondition (shape, finiteness, intercept)."""


class SingularSegmentError(BreakscopeError):
    """A segment's cross-product matrix is numerically singular."""


class InvalidSegmentationError(BreakscopeError, ValueError):
    """Break dates are unordered, out of range or violate the minimum duration."""


class ComputationGuardError(BreakscopeError):
    """A requested computation exceeds a configured size guard."""
