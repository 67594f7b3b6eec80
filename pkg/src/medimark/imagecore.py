"""
This module contains the raster types shared by every pipeline of medimark:
8-bit grayscale pixel grids, rectangular regions of interest and binary bit
planes. It also provides the separation and merging of the least significant
bit plane and a bit-exact reader/writer for binary PGM ("P5") images.
"""
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from medimark.errors import (
    DimensionMismatch,
    MalformedHeader,
    OddHighSample,
    RoiOutOfBounds,
    TruncatedData,
    UnsupportedFormat,
)

__all__ = [
    "PixelGrid",
    "RoiRect",
    "BitPlane",
    "read_pgm",
    "write_pgm",
    "load_pgm",
    "save_pgm",
    "atomic_write_bytes",
    "split_lsb",
    "merge_lsb",
    "raster_positions_outside",
    "psnr",
]

_PGM_WHITESPACE = b" \t\n\r\x0b\x0c"


def _frozen(array):
    array.setflags(write=False)
    return array


class PixelGrid:
    """
    Immutable 8-bit grayscale raster.

    Attributes
    ----------
    array : ndarray, shape (height, width), dtype uint8
        Read-only sample array, row-major.

    width : int
        Number of columns.

    height : int
        Number of rows.

    samples : ndarray, shape (width * height,)
        Flat row-major view of the samples.
    """

    def __init__(self, array):
        arr = np.asarray(array)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(
                "a pixel grid needs a 2-D sample array with at least one "
                "row and one column, got shape {}".format(arr.shape)
            )
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel samples must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(
                arr == np.floor(arr)
            ):
                raise ValueError("pixel samples must be integers")
        self._array = _frozen(np.array(arr, dtype=np.uint8, copy=True))

    @classmethod
    def from_samples(cls, width, height, samples):
        """
        Build a grid from a flat row-major sample sequence.
        """
        flat = np.asarray(samples)
        if width < 1 or height < 1 or flat.size != width * height:
            raise DimensionMismatch(
                "expected {} samples for a {}x{} grid, got {}".format(
                    width * height, width, height, flat.size
                )
            )
        return cls(flat.reshape(height, width))

    @classmethod
    def zeros(cls, width, height):
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def array(self):
        return self._array

    @property
    def width(self):
        return self._array.shape[1]

    @property
    def height(self):
        return self._array.shape[0]

    @property
    def shape(self):
        return self._array.shape

    @property
    def samples(self):
        return self._array.reshape(-1)

    def rot90(self, k=1):
        """
        Rotate the grid counter-clockwise by ``k`` quarter turns.
        """
        return PixelGrid(np.rot90(self._array, k))

    def flip(self, axis):
        """
        Mirror the grid; ``axis=0`` flips rows (vertical), ``axis=1``
        flips columns (horizontal).
        """
        return PixelGrid(np.flip(self._array, axis=axis))

    def __eq__(self, other):
        if not isinstance(other, PixelGrid):
            return NotImplemented
        return self.shape == other.shape and bool(
            np.array_equal(self._array, other._array)
        )

    def __hash__(self):
        return hash((self.shape, self._array.tobytes()))

    def __repr__(self):
        return "PixelGrid(width={}, height={})".format(self.width, self.height)


@dataclass(frozen=True)
class RoiRect:
    """
    Axis-aligned region of interest; pixels inside keep all eight bits.

    Attributes
    ----------
    x, y : int
        Column and row of the top-left corner.

    w, h : int
        Width and height in pixels, both at least 1.
    """

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError("RoiRect.{} must be an integer".format(name))
            object.__setattr__(self, name, int(value))
        if self.x < 0 or self.y < 0:
            raise RoiOutOfBounds("ROI origin must be non-negative")
        if self.w < 1 or self.h < 1:
            raise RoiOutOfBounds("ROI width and height must be at least 1")

    @classmethod
    def parse(cls, text):
        """
        Parse the ``"X,Y,W,H"`` notation used on the command line.
        """
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 4:
            raise ValueError("ROI must be given as X,Y,W,H, got {!r}".format(text))
        try:
            values = [int(p) for p in parts]
        except ValueError:
            raise ValueError("ROI must be given as X,Y,W,H, got {!r}".format(text))
        return cls(*values)

    @property
    def area(self):
        return self.w * self.h

    def fits(self, width, height):
        return self.x + self.w <= width and self.y + self.h <= height

    def check_fits(self, width, height):
        if not self.fits(width, height):
            raise RoiOutOfBounds(
                "ROI {} does not fit a {}x{} image".format(self, width, height)
            )

    def mask(self, width, height):
        """
        Boolean mask of shape (height, width), True inside the ROI.
        """
        self.check_fits(width, height)
        inside = np.zeros((height, width), dtype=bool)
        inside[self.y : self.y + self.h, self.x : self.x + self.w] = True
        return inside

    def to_dict(self):
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    def __str__(self):
        return "{},{},{},{}".format(self.x, self.y, self.w, self.h)


class BitPlane:
    """
    Immutable binary plane, one bit per pixel, row-major.

    Attributes
    ----------
    bits : ndarray, shape (height, width), dtype uint8
        Read-only array of 0/1 values.
    """

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.ndim != 2:
            raise DimensionMismatch("a bit plane needs a 2-D array")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError("bit plane entries must be 0 or 1")
        self._bits = _frozen(np.array(arr, dtype=np.uint8, copy=True))

    @classmethod
    def from_packed(cls, width, height, packed):
        """
        Unpack a most-significant-bit-first byte sequence of
        ``ceil(width * height / 8)`` bytes.
        """
        raw = np.frombuffer(bytes(packed), dtype=np.uint8)
        if raw.size != math.ceil(width * height / 8):
            raise DimensionMismatch("packed bit count does not match dimensions")
        flat = np.unpackbits(raw, count=width * height)
        return cls(flat.reshape(height, width))

    @property
    def bits(self):
        return self._bits

    @property
    def width(self):
        return self._bits.shape[1]

    @property
    def height(self):
        return self._bits.shape[0]

    @property
    def shape(self):
        return self._bits.shape

    def packed(self):
        """
        Pack the bits row-major, most significant bit first, zero padded
        to a whole number of bytes.
        """
        return np.packbits(self._bits.reshape(-1)).tobytes()

    def count(self):
        return int(self._bits.sum())

    def __eq__(self, other):
        if not isinstance(other, BitPlane):
            return NotImplemented
        return self.shape == other.shape and bool(
            np.array_equal(self._bits, other._bits)
        )

    def __repr__(self):
        return "BitPlane(width={}, height={})".format(self.width, self.height)


# -------------------------------- PGM codec ---------------------------------


def _read_header_token(data, pos):
    """
    Return the next whitespace separated header token and the position
    just after it, skipping '#' comments up to the end of the line.
    """
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch in _PGM_WHITESPACE:
            pos += 1
        elif ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos : pos + 1] not in _PGM_WHITESPACE + b"#":
        pos += 1
    if start == pos:
        raise MalformedHeader("PGM header ended prematurely")
    return data[start:pos], pos


def read_pgm(data):
    """
    Decode a binary PGM image with maxval 255.

    Parameters
    ----------
    data : bytes
        The complete file content. Bytes after the raster are ignored.

    Returns
    -------
    grid : :class:`PixelGrid`
    """
    data = bytes(data)
    magic = data[:2]
    if magic != b"P5":
        if len(magic) == 2 and magic[:1] == b"P" and magic[1:] in b"1234567":
            raise UnsupportedFormat(
                "only binary PGM (P5) is supported, got {}".format(magic.decode())
            )
        raise MalformedHeader("not a PGM file (bad magic number)")
    if len(data) < 3 or data[2:3] not in _PGM_WHITESPACE + b"#":
        raise MalformedHeader("magic number must be followed by whitespace")

    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _read_header_token(data, pos)
        if not token.isdigit():
            raise MalformedHeader("PGM {} is not a decimal number".format(name))
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeader("PGM dimensions must be positive")
    if maxval != 255:
        raise UnsupportedFormat("maxval {} is not supported (only 255)".format(maxval))
    if pos >= len(data) or data[pos : pos + 1] not in _PGM_WHITESPACE:
        raise MalformedHeader("maxval must be followed by a single whitespace")
    pos += 1

    count = width * height
    raster = data[pos : pos + count]
    if len(raster) < count:
        raise TruncatedData(
            "expected {} samples, found {}".format(count, len(raster))
        )
    return PixelGrid(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def write_pgm(grid):
    """
    Encode a grid in the canonical binary PGM form
    ``"P5\\n{width} {height}\\n255\\n"`` followed by the raw samples.
    """
    header = "P5\n{} {}\n255\n".format(grid.width, grid.height).encode("ascii")
    return header + grid.array.tobytes()


def atomic_write_bytes(path, data):
    """
    Write ``data`` to ``path`` through a temporary file in the same
    directory followed by a rename, so readers never see partial content.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_pgm(path):
    with open(path, "rb") as fh:
        return read_pgm(fh.read())


def save_pgm(path, grid):
    atomic_write_bytes(path, write_pgm(grid))


# --------------------------------- bit planes --------------------------------


def split_lsb(grid):
    """
    Separate a grid into its seven high bit planes and its LSB plane.

    Returns
    -------
    high : :class:`PixelGrid`
        The grid with bit 0 of every sample cleared.

    lsb : :class:`BitPlane`
        Bit 0 of every sample.
    """
    arr = grid.array
    return PixelGrid(arr & np.uint8(0xFE)), BitPlane(arr & np.uint8(1))


def merge_lsb(high, lsb):
    """
    Recombine a high-plane grid with an LSB plane; exact inverse of
    :func:`split_lsb`.
    """
    if high.shape != lsb.shape:
        raise DimensionMismatch(
            "high grid is {}x{} but bit plane is {}x{}".format(
                high.width, high.height, lsb.width, lsb.height
            )
        )
    if np.any(high.array & 1):
        raise OddHighSample("high grid has samples with bit 0 set")
    return PixelGrid(high.array | lsb.bits)


def raster_positions_outside(width, height, roi):
    """
    Row-major indices of every pixel lying outside the ROI, ascending.
    """
    return np.flatnonzero(~roi.mask(width, height))


def psnr(reference, other):
    """
    Peak signal-to-noise ratio in dB between two equally sized grids;
    ``inf`` when they are identical.
    """
    if reference.shape != other.shape:
        raise DimensionMismatch("PSNR needs grids of equal size")
    diff = reference.array.astype(np.float64) - other.array.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return math.inf
    return 20 * math.log10(255.0 / math.sqrt(mse))
