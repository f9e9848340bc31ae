"""Exception types raised by the geope kernels."""


class GeoPEError(ValueError):
    """Base class for all geope errors."""


class NonUnitRotor(GeoPEError):
    """A quaternion used as a rotation is not unit-norm within tolerance."""


class ZeroAxis(GeoPEError):
    """A rotation axis has (numerically) zero length."""


class NonUnitAxis(GeoPEError):
    """An axis passed to the score decomposition is not unit length."""


class EmptyList(GeoPEError):
    """A mean was requested over no rotations."""


class DimensionMismatch(GeoPEError):
    """Feature or head dimension incompatible with the requested mode."""


class IndexOutOfRange(GeoPEError):
    """Sub-vector index outside the range allowed by the schedule."""
