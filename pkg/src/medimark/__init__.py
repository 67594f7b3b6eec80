from .version import version as __version__  # noqa

from medimark.imagecore import PixelGrid, RoiRect, BitPlane, read_pgm, write_pgm
from medimark.payload import SecretKey
from medimark.report import TamperReport, TamperStatus
from medimark.store import Store
from medimark.watermark import EmbedParams, embed, extract, verify, locate

__all__ = [
    "PixelGrid",
    "RoiRect",
    "BitPlane",
    "read_pgm",
    "write_pgm",
    "SecretKey",
    "TamperReport",
    "TamperStatus",
    "Store",
    "EmbedParams",
    "embed",
    "extract",
    "verify",
    "locate",
]
