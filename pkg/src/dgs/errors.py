"""Exception and warning types shared across the toolkit."""

from __future__ import annotations


class DgsError(Exception):
    """Base class for all toolkit errors.

    ``code`` is a stable machine-readable identifier used by the CLI for its
    ``ERROR:<code>:`` stderr prefix.
    """

    code = "ERROR"


class NotFound(DgsError):
    code = "NOT_FOUND"


class UnsupportedFormat(DgsError):
    code = "UNSUPPORTED_FORMAT"


class InconsistentGeometry(DgsError):
    code = "INCONSISTENT_GEOMETRY"


class IndexOutOfRange(DgsError):
    code = "INDEX_OUT_OF_RANGE"


class DecodeError(DgsError):
    code = "DECODE_ERROR"


class VideoTooShort(DgsError):
    code = "VIDEO_TOO_SHORT"


class EmptySegment(DgsError):
    code = "EMPTY_SEGMENT"


class GeometryMismatch(DgsError):
    code = "GEOMETRY_MISMATCH"


class EmptyInput(DgsError):
    code = "EMPTY_INPUT"


class DimensionMismatch(DgsError):
    code = "DIMENSION_MISMATCH"


class DegenerateData(DgsError):
    code = "DEGENERATE_DATA"


class OutOfBounds(DgsError):
    code = "OUT_OF_BOUNDS"


class UsageError(DgsError):
    code = "USAGE"


class UnbalancedDataset(UserWarning):
    """Warned (not raised) when a labeled dataset has an empty class."""
