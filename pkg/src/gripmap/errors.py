"""Exception hierarchy.

Everything derives from ``GripMapError`` so callers can catch one type.
Validation-type problems also derive from ``ValueError``.
"""


class GripMapError(Exception):
    pass


class ValidationError(GripMapError, ValueError):
    """Malformed input file, bad configuration or violated invariant."""


class TrackParseError(ValidationError):
    pass


class OutOfCorridorError(ValidationError):
    def __init__(self, message, nearest_s):
        super().__init__(message)
        self.nearest_s = nearest_s


class DegenerateFrameError(ValidationError):
    pass


class InvalidCoordinateError(ValidationError):
    pass


class GridError(ValidationError):
    pass


class FormatError(ValidationError):
    pass


class ChecksumError(FormatError):
    pass


class ConfigError(ValidationError):
    pass


class InfeasibleError(GripMapError):
    """No dynamically feasible solution; ``layer`` names where it broke."""

    def __init__(self, message, layer=None, s=None):
        super().__init__(message)
        self.layer = layer
        self.s = s
