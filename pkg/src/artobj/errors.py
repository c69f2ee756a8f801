"""Exception types shared across the artobj modules.

Every error raised by the library derives from :class:`ArtObjError`, so
callers can catch one base class at pipeline boundaries.  The concrete
subclasses below are part of the public contract of the operations that
raise them.
"""

from __future__ import annotations


class ArtObjError(Exception):
    """Base class for all artobj errors."""


class EmptyInput(ArtObjError):
    """An operation received an empty point cloud, mesh, or list."""


class DegenerateGeometry(ArtObjError):
    """Geometry too flat/thin/coincident for the requested operation."""


class InvalidAxisIndex(ArtObjError):
    """An OBB axis index outside {0, 1, 2}."""


class UnknownPart(ArtObjError):
    """A joint or document references a part index that is not declared."""


class DialectMismatch(ArtObjError):
    """A joint line written in a different dialect than the one being parsed."""


class ParseError(ArtObjError):
    """Malformed DSL or XML input.

    Carries an optional 1-based ``line`` / ``column`` of the offending token.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{message} ({where})"
        super().__init__(message)


class CycleDetected(ArtObjError):
    """The joint graph violates the kinematic-tree invariant."""


class StateLengthMismatch(ArtObjError):
    """Joint-state vector length differs from the joint count."""


class MissingPivot(ArtObjError):
    """A revolute joint without a pivot where one is required."""


class UnsupportedJoint(ArtObjError):
    """URDF joint type outside the supported subset."""


class UnresolvedLink(ArtObjError):
    """URDF joint references a link that is not declared."""


class MissingMesh(ArtObjError):
    """A referenced mesh file could not be loaded."""


class NotWatertight(ArtObjError):
    """Mesh has open edges where a watertight mesh is required."""

    def __init__(self, message: str, open_edge_count: int = 0):
        self.open_edge_count = open_edge_count
        super().__init__(message)


class NoSurface(ArtObjError):
    """A scalar field never crosses the requested iso level."""


class ExternalFormatError(ArtObjError):
    """Malformed external grid/point-map/depth file."""


class BehindCamera(ArtObjError):
    """A 3D point at or behind the camera plane cannot be projected."""


class InvalidPrompt(ArtObjError):
    """A 2D prompt pixel has no valid 3D point in the point map."""


class PredictorUnavailable(ArtObjError):
    """The joint predictor failed after all retries."""


class MalformedResponse(ArtObjError):
    """Predictor answered with a payload violating the protocol schema."""
