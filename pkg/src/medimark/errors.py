"""
This module contains the exception hierarchy of medimark.
Every error raised by the package derives from :class:`MedimarkError`,
so callers (and the command-line front end) can catch the whole family
at once or branch on the specific condition.
"""

__all__ = [
    "MedimarkError",
    "ImageFormatError",
    "MalformedHeader",
    "UnsupportedFormat",
    "TruncatedData",
    "DimensionMismatch",
    "OddHighSample",
    "RoiOutOfBounds",
    "RoiOverlapsHeader",
    "NonPositiveSigma",
    "ZeroMass",
    "InvalidParams",
    "RecordTooLarge",
    "MalformedRecord",
    "MalformedPayload",
    "CrcMismatch",
    "MissingKey",
    "InvalidKey",
    "InsufficientCapacity",
    "NotWatermarked",
    "PayloadUnreadable",
    "NothingToLocate",
    "StoreError",
    "DuplicateRecord",
    "UnknownId",
    "CorruptObject",
    "NotArchived",
    "CorruptIndex",
    "StoreLocked",
]


class MedimarkError(Exception):
    """
    Base class for all errors raised by medimark.
    """


# ---------------------------------- images ----------------------------------


class ImageFormatError(MedimarkError, ValueError):
    """
    The bytes handed to the PGM decoder are not a usable image.
    """


class MalformedHeader(ImageFormatError):
    pass


class UnsupportedFormat(ImageFormatError):
    pass


class TruncatedData(ImageFormatError):
    pass


class DimensionMismatch(MedimarkError, ValueError):
    pass


class OddHighSample(MedimarkError, ValueError):
    """
    A sample of a high-plane grid has its least significant bit set.
    """


class RoiOutOfBounds(MedimarkError, ValueError):
    pass


class RoiOverlapsHeader(MedimarkError, ValueError):
    """
    The region of interest reaches into the raster positions reserved
    for the watermark header.
    """


# --------------------------------- features ---------------------------------


class NonPositiveSigma(MedimarkError, ValueError):
    pass


class ZeroMass(MedimarkError, ValueError):
    """
    Moments are undefined for an image whose samples are all zero.
    """


class InvalidParams(MedimarkError, ValueError):
    pass


# ---------------------------------- payload ---------------------------------


class RecordTooLarge(MedimarkError, ValueError):
    pass


class MalformedRecord(MedimarkError, ValueError):
    pass


class MalformedPayload(MedimarkError, ValueError):
    pass


class CrcMismatch(MedimarkError, ValueError):
    pass


class MissingKey(MedimarkError):
    pass


class InvalidKey(MedimarkError, ValueError):
    pass


# --------------------------------- watermark --------------------------------


class InsufficientCapacity(MedimarkError, ValueError):
    pass


class NotWatermarked(MedimarkError):
    """
    No valid watermark header was found in the image.
    """


class PayloadUnreadable(MedimarkError):
    """
    The header is valid but the payload failed its checksum,
    either because of a wrong key or damaged payload bits.
    """


class NothingToLocate(MedimarkError):
    pass


# ----------------------------------- store ----------------------------------


class StoreError(MedimarkError):
    """
    Base class for errors of the record store.
    """


class DuplicateRecord(StoreError):
    pass


class UnknownId(StoreError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class CorruptObject(StoreError):
    pass


class NotArchived(StoreError):
    pass


class CorruptIndex(StoreError):
    """
    An index line could not be decoded.

    Attributes
    ----------
    line_number : int
        1-based number of the offending line in ``index.jsonl``.
    """

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class StoreLocked(StoreError):
    pass
