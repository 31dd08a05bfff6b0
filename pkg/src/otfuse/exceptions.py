"""Exception hierarchy shared by every module."""


class OTFuseError(Exception):
    """Base class for all library errors."""


class ParameterError(OTFuseError, ValueError):
    """A configuration parameter is outside its valid range."""


class DomainError(OTFuseError, ValueError):
    """Input lies outside the domain of the operation (e.g. empty support)."""


class ShapeError(OTFuseError, ValueError):
    """Array shapes or dimensions are inconsistent."""


class DataError(OTFuseError, ValueError):
    """Input data violates a precondition (labels, depths, file contents)."""


class DegenerateVectorError(DomainError):
    """A vector with zero norm was passed where a direction is needed."""


class DegenerateTargetError(DomainError):
    """All target masses aggregate to zero."""


class NumericError(OTFuseError, ArithmeticError):
    """A numerical routine overflowed or produced non-finite values."""


class CapacityError(OTFuseError, ValueError):
    """Problem exceeds the size the exact oracle is meant for."""

