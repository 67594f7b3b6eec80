"""
Fixed 40-octet header that makes a watermarked image self-describing.
It is written into the LSBs of the last 320 raster positions.
"""
import struct
import zlib

import numpy as np

from medimark.imagecore import RoiRect

__all__ = ["HeaderBlock", "HeaderError", "HEADER_BITS"]

MAGIC = b"WM"
VERSION = 1

_BODY = struct.Struct(">2sB4HBI16s")
_CRC = struct.Struct(">I")
_PAD = b"\x00" * 4

HEADER_BYTES = _BODY.size + _CRC.size + len(_PAD)
HEADER_BITS = 8 * HEADER_BYTES


class HeaderError(ValueError):
    """
    Raised by :meth:`HeaderBlock.parse`; the watermark pipelines turn it
    into :class:`medimark.errors.NotWatermarked`.
    """


class HeaderBlock:
    """
    Decoded watermark header.

    Attributes
    ----------
    roi : :class:`medimark.imagecore.RoiRect`

    scale : int
        Edge-map downscale factor used at embedding.

    payload_len : int
        Ciphertext length in bytes.

    nonce : bytes
        16-octet initial counter block.
    """

    def __init__(self, roi, scale, payload_len, nonce, version=VERSION):
        self.roi = roi
        self.scale = int(scale)
        self.payload_len = int(payload_len)
        self.nonce = bytes(nonce)
        self.version = int(version)

    def pack(self):
        body = _BODY.pack(
            MAGIC,
            self.version,
            self.roi.x,
            self.roi.y,
            self.roi.w,
            self.roi.h,
            self.scale,
            self.payload_len,
            self.nonce,
        )
        return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF) + _PAD

    def to_bits(self):
        return np.unpackbits(np.frombuffer(self.pack(), dtype=np.uint8))

    @classmethod
    def parse(cls, data):
        data = bytes(data)
        if len(data) != HEADER_BYTES:
            raise HeaderError("header must be {} octets".format(HEADER_BYTES))
        body = data[: _BODY.size]
        (crc,) = _CRC.unpack_from(data, _BODY.size)
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise HeaderError("header checksum mismatch")
        if data[-len(_PAD) :] != _PAD:
            raise HeaderError("header padding is not zero")
        magic, version, x, y, w, h, scale, payload_len, nonce = _BODY.unpack(body)
        if magic != MAGIC:
            raise HeaderError("bad header magic")
        if version != VERSION:
            raise HeaderError("unsupported header version {}".format(version))
        try:
            roi = RoiRect(x, y, w, h)
        except ValueError as err:
            raise HeaderError("header ROI invalid: {}".format(err)) from None
        return cls(roi, scale, payload_len, nonce, version)

    @classmethod
    def from_bits(cls, bits):
        return cls.parse(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes())

    def to_dict(self):
        return {
            "version": self.version,
            "roi": self.roi.to_dict(),
            "scale": self.scale,
            "payloadLenBytes": self.payload_len,
        }

    def __repr__(self):
        return "HeaderBlock(roi={}, scale={}, payload_len={})".format(
            str(self.roi), self.scale, self.payload_len
        )
