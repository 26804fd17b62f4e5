"""Exception types shared across the toolkit.

Every error raised on a domain-level failure derives from StainKitError so
callers (and the command line front end) can distinguish bad inputs from
genuine bugs.
"""

__all__ = [
    "StainKitError",
    "ShapeMismatchError",
    "InsufficientTissueError",
    "DegenerateStainsError",
    "SingularMatrixError",
    "EmptyMaskError",
    "EmptyDatasetError",
    "DegenerateSampleError",
    "ConventionMismatchError",
    "ProfileSchemaError",
    "ImageFormatError",
    "UnsupportedBitDepthError",
]


class StainKitError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeMismatchError(StainKitError):
    """Arrays that must share a shape do not."""


class InsufficientTissueError(StainKitError):
    """Too few tissue pixels to estimate anything reliably."""


class DegenerateStainsError(StainKitError):
    """The two extreme stain directions are (near) identical."""


class SingularMatrixError(StainKitError):
    """A stain matrix is too ill-conditioned to invert."""


class EmptyMaskError(StainKitError):
    """An operation that averages over a mask received an all-false mask."""


class EmptyDatasetError(StainKitError):
    """A fit was requested over zero usable images."""


class DegenerateSampleError(StainKitError):
    """Repeated draws from a stain profile failed to produce a usable matrix."""


class ConventionMismatchError(StainKitError):
    """A profile was recorded under different conventions than the run requests."""


class ProfileSchemaError(StainKitError):
    """A profile file is malformed or semantically invalid."""


class ImageFormatError(StainKitError):
    """An image file could not be decoded or has an unsupported layout."""


class UnsupportedBitDepthError(ImageFormatError):
    """16-bit image data where 8-bit RGB input is required."""
