"""
This module rearranges an edge map in 6x6 blocks so that the raw map cannot
be read back from the carrier without reversing the arrangement.

Blocks are visited along a clockwise inward spiral. Each block is split into
a left and a right 6x3 half; the sequence of halves
``L0, R0, L1, R1, ..., Ln-1, Rn-1`` is rotated by one position, so that
block ``i`` becomes ``(R_i, L_{i+1})`` and the last block wraps around to
``(R_{n-1}, L_0)``. The rotation is a bijection, hence exactly reversible.
"""
import numpy as np

from medimark.errors import DimensionMismatch
from medimark.feature import EdgeMap

__all__ = [
    "BLOCK",
    "PaddedMap",
    "pad_map",
    "unpad_map",
    "spiral_block_order",
    "scramble_map",
    "unscramble_map",
]

BLOCK = 6
_HALF = BLOCK // 2


def _padded_side(n):
    return BLOCK * (-(-n // BLOCK))


class PaddedMap:
    """
    Edge map zero-padded on the right and bottom to multiples of 6.

    Attributes
    ----------
    bits : ndarray, shape (height, width), dtype uint8
        Read-only padded bits, row-major.

    orig_width, orig_height : int
        Dimensions of the map before padding.

    scale : int
        Downscale factor of the underlying edge map.
    """

    def __init__(self, bits, orig_width, orig_height, scale=1):
        arr = np.array(bits, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise DimensionMismatch("a padded map needs a 2-D array")
        if arr.shape != (_padded_side(orig_height), _padded_side(orig_width)):
            raise DimensionMismatch(
                "padded map of shape {} does not match original {}x{}".format(
                    arr.shape, orig_width, orig_height
                )
            )
        if arr.size and arr.max() > 1:
            raise ValueError("padded map entries must be 0 or 1")
        arr.setflags(write=False)
        self._bits = arr
        self.orig_width = int(orig_width)
        self.orig_height = int(orig_height)
        self.scale = int(scale)

    @classmethod
    def from_packed(cls, packed, orig_width, orig_height, scale=1):
        """
        Rebuild a padded map from its packed row-major bits.
        """
        width, height = _padded_side(orig_width), _padded_side(orig_height)
        raw = np.frombuffer(bytes(packed), dtype=np.uint8)
        flat = np.unpackbits(raw, count=width * height)
        return cls(flat.reshape(height, width), orig_width, orig_height, scale)

    @staticmethod
    def packed_size(orig_width, orig_height):
        """
        Number of bytes taken by the packed bits of a padded map.
        """
        return -(-(_padded_side(orig_width) * _padded_side(orig_height)) // 8)

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
    def blocks_wide(self):
        return self.width // BLOCK

    @property
    def blocks_high(self):
        return self.height // BLOCK

    def packed(self):
        return np.packbits(self._bits.reshape(-1)).tobytes()

    def count(self):
        return int(self._bits.sum())

    def __eq__(self, other):
        if not isinstance(other, PaddedMap):
            return NotImplemented
        return (
            self.orig_width == other.orig_width
            and self.orig_height == other.orig_height
            and self.scale == other.scale
            and bool(np.array_equal(self._bits, other._bits))
        )

    def __repr__(self):
        return "PaddedMap(width={}, height={}, orig={}x{})".format(
            self.width, self.height, self.orig_width, self.orig_height
        )


def pad_map(edges):
    """
    Zero-pad an :class:`medimark.feature.EdgeMap` to whole 6x6 blocks.
    """
    bits = np.zeros(
        (_padded_side(edges.height), _padded_side(edges.width)), dtype=np.uint8
    )
    bits[: edges.height, : edges.width] = edges.bits
    return PaddedMap(bits, edges.width, edges.height, edges.scale)


def unpad_map(padded):
    """
    Drop the padding; exact inverse of :func:`pad_map`.
    """
    return EdgeMap(
        padded.bits[: padded.orig_height, : padded.orig_width], scale=padded.scale
    )


def spiral_block_order(bw, bh):
    """
    Block coordinates ``(bx, by)`` along a clockwise inward spiral that
    starts at block (0, 0): top row left to right, right column downwards,
    bottom row right to left, left column upwards, then the next ring.
    """
    if bw < 1 or bh < 1:
        raise ValueError("block grid must be at least 1x1")
    order = []
    left, top, right, bottom = 0, 0, bw - 1, bh - 1
    while left <= right and top <= bottom:
        for x in range(left, right + 1):
            order.append((x, top))
        for y in range(top + 1, bottom + 1):
            order.append((right, y))
        if top < bottom:
            for x in range(right - 1, left - 1, -1):
                order.append((x, bottom))
        if left < right:
            for y in range(bottom - 1, top, -1):
                order.append((left, y))
        left, top, right, bottom = left + 1, top + 1, right - 1, bottom - 1
    return order


def _halves(bits, order):
    """
    Halves of the blocks in ``order``, shape (2n, 6, 3):
    left half of block 0, right half of block 0, left half of block 1, ...
    """
    halves = []
    for bx, by in order:
        block = bits[by * BLOCK : (by + 1) * BLOCK, bx * BLOCK : (bx + 1) * BLOCK]
        halves.append(block[:, :_HALF])
        halves.append(block[:, _HALF:])
    return np.stack(halves)


def _assemble(halves, order, shape):
    bits = np.zeros(shape, dtype=np.uint8)
    for i, (bx, by) in enumerate(order):
        rows = slice(by * BLOCK, (by + 1) * BLOCK)
        bits[rows, bx * BLOCK : bx * BLOCK + _HALF] = halves[2 * i]
        bits[rows, bx * BLOCK + _HALF : (bx + 1) * BLOCK] = halves[2 * i + 1]
    return bits


def _rotate(padded, shift):
    order = spiral_block_order(padded.blocks_wide, padded.blocks_high)
    halves = np.roll(_halves(padded.bits, order), shift, axis=0)
    bits = _assemble(halves, order, padded.bits.shape)
    return PaddedMap(bits, padded.orig_width, padded.orig_height, padded.scale)


def scramble_map(padded):
    """
    Rotate the spiral sequence of half-blocks by one: block ``i`` becomes
    ``(R_i, L_{(i+1) mod n})``.
    """
    return _rotate(padded, -1)


def unscramble_map(padded):
    """
    Exact inverse of :func:`scramble_map`.
    """
    return _rotate(padded, 1)
