"""Exception types shared across the package."""


class PointSbrError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(PointSbrError):
    """Degenerate or malformed geometric input (empty cloud, zero-area mesh, ...)."""


class InvalidFieldError(PointSbrError):
    """An electromagnetic field vector violates a physical precondition."""


class BackendError(PointSbrError):
    """An external refinement backend failed or produced a malformed reply."""


class FileFormatError(PointSbrError):
    """A binary or text input file does not match its expected layout."""


class GridMismatchError(PointSbrError):
    """Two sweep results do not share the same (theta, phi) grid."""
