from __future__ import annotations

from typing import Optional


class MapDeltaError(Exception):
    """Base class of every error raised by map_delta."""


class SchemaError(MapDeltaError, ValueError):
    """A document field is missing or has the wrong type."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class IntegrityError(MapDeltaError):
    """A connectivity field references an id that does not resolve."""

    def __init__(self, message: str, element_id: Optional[int] = None):
        super().__init__(message)
        self.element_id = element_id


class GeometryError(MapDeltaError, ValueError):
    """A polyline or polygon is degenerate or self-intersecting."""

    def __init__(self, message: str, element_id: Optional[int] = None):
        super().__init__(message)
        self.element_id = element_id


class DegenerateInput(MapDeltaError, ValueError):
    pass


class EmptyInput(MapDeltaError, ValueError):
    pass


class TargetMissing(MapDeltaError):
    pass


class IdCollision(MapDeltaError):
    pass


class ConflictingChange(MapDeltaError):
    pass


class InconsistentInput(MapDeltaError):
    pass


class ClassMismatch(MapDeltaError):
    pass
