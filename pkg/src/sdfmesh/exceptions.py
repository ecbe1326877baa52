"""Error types raised by the meshing pipeline."""


class MeshingError(Exception):
    """Base class for all pipeline errors."""


class EmptyContour(MeshingError, ValueError):
    pass


class DegenerateDomain(MeshingError, ValueError):
    pass


class ZeroDensityCell(MeshingError, ValueError):
    pass


class NotBoundaryCell(MeshingError, ValueError):
    pass


class ProjectionStarvation(MeshingError, RuntimeError):
    pass


class EmptyMedialAxis(MeshingError, RuntimeError):
    pass


class EmptyList(MeshingError, ValueError):
    pass


class DegenerateTriangle(MeshingError, ValueError):
    pass


class EmptyTriangulation(MeshingError, RuntimeError):
    pass


class DegenerateCell(MeshingError, ValueError):
    pass


class NoConvergence(MeshingError, RuntimeError):
    pass


class NewtonDiverged(MeshingError, RuntimeError):
    pass


class ParseError(MeshingError, ValueError):
    """Malformed configuration text. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(MeshingError, ValueError):
    pass
