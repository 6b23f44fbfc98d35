"""Exception hierarchy shared by all modules.

Every error raised on bad input is a ``ValueError`` subclass so callers that
only care about "the input was wrong" can catch one thing.
"""


class BellBoundsError(Exception):
    """Base class for all package errors."""


class UsageError(BellBoundsError, ValueError):
    """Malformed call: wrong party count, empty list, inconsistent dims."""


class ConstraintError(BellBoundsError, ValueError):
    """A domain object violates one of its invariants."""


class DomainError(BellBoundsError, ValueError):
    """Numerical input outside the domain of the operation (e.g. non-Hermitian)."""


class NonQuantumCalibrationError(BellBoundsError, ValueError):
    """Calibration Bell value above the quantum maximum of the expression."""


class GridTooCoarseError(BellBoundsError, RuntimeError):
    """No grid point falls inside the constraint band."""


class ResourceError(BellBoundsError, RuntimeError):
    """Requested enumeration is too large to run at desk scale."""


class InputError(BellBoundsError, ValueError):
    """Experimental data are inconsistent (signaling, bad normalization)."""


class InternalConsistencyError(BellBoundsError, ArithmeticError):
    """A quantity that is non-negative for valid inputs came out negative."""
