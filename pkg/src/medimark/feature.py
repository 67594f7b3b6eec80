"""
This module computes the two halves of the image signature: the binary edge
map used to localize tampering (block-mean reduction, Laplacian of Gaussian
response and thresholded zero crossings) and Hu's seven moment invariants
used as the global integrity check. All inputs are expected to be LSB-zeroed
images, so that replacing the LSB plane never changes the signature.
"""
import math
import struct
from fractions import Fraction

import numpy as np
from scipy import ndimage

from medimark.errors import (
    DimensionMismatch,
    InvalidParams,
    NonPositiveSigma,
    ZeroMass,
)

__all__ = [
    "RealGrid",
    "EdgeMap",
    "MomentSignature",
    "downscale",
    "log_kernel",
    "log_response",
    "edge_map",
    "compute_edge_map",
    "hu_moments",
]


class RealGrid:
    """
    Immutable grid of finite binary64 values.

    Attributes
    ----------
    values : ndarray, shape (height, width), dtype float64
        Read-only values, row-major.
    """

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch("a real grid needs a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("real grid values must be finite")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self):
        return self._values

    @property
    def width(self):
        return self._values.shape[1]

    @property
    def height(self):
        return self._values.shape[0]

    @property
    def shape(self):
        return self._values.shape

    def __repr__(self):
        return "RealGrid(width={}, height={})".format(self.width, self.height)


class EdgeMap:
    """
    Binary edge map at reduced scale.

    Attributes
    ----------
    bits : ndarray, shape (height, width), dtype uint8
        Read-only 0/1 array; 1 marks a contour cell.

    scale : int
        Downscale factor between the source image and the map.
    """

    def __init__(self, bits, scale=1):
        arr = np.array(bits, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise DimensionMismatch("an edge map needs a 2-D array")
        if arr.size and arr.max() > 1:
            raise ValueError("edge map entries must be 0 or 1")
        if int(scale) < 1:
            raise InvalidParams("edge map scale must be at least 1")
        arr.setflags(write=False)
        self._bits = arr
        self.scale = int(scale)

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

    def count(self):
        return int(self._bits.sum())

    def __eq__(self, other):
        if not isinstance(other, EdgeMap):
            return NotImplemented
        return (
            self.scale == other.scale
            and self.shape == other.shape
            and bool(np.array_equal(self._bits, other._bits))
        )

    def __repr__(self):
        return "EdgeMap(width={}, height={}, scale={})".format(
            self.width, self.height, self.scale
        )


class MomentSignature:
    """
    Hu's seven moment invariants and their average.

    Attributes
    ----------
    phi : tuple of float
        The invariants phi1..phi7.

    average : float
        Arithmetic mean of ``phi``, always recomputed from ``phi`` with the
        same left-to-right summation.
    """

    _STRUCT = struct.Struct("<8d")
    SIZE = _STRUCT.size

    def __init__(self, phi):
        phi = tuple(float(p) for p in phi)
        if len(phi) != 7:
            raise ValueError("a moment signature has exactly seven invariants")
        if not all(math.isfinite(p) for p in phi):
            raise ValueError("moment invariants must be finite")
        self.phi = phi
        self.average = sum(phi) / 7

    @classmethod
    def zero(cls):
        return cls([0.0] * 7)

    def to_bytes(self):
        """
        Eight little-endian binary64 values: phi1..phi7 then the average.
        """
        return self._STRUCT.pack(*self.phi, self.average)

    @classmethod
    def from_bytes(cls, data):
        values = cls._STRUCT.unpack(bytes(data))
        sig = cls(values[:7])
        if struct.pack("<d", sig.average) != struct.pack("<d", values[7]):
            raise ValueError("stored average does not match the invariants")
        return sig

    def values(self):
        return self.phi + (self.average,)

    def matches(self, other, rtol=1e-12):
        """
        True when every invariant and the average agree within relative
        tolerance ``rtol``.
        """
        for a, b in zip(self.values(), other.values()):
            if abs(a - b) > rtol * max(abs(a), abs(b)):
                return False
        return True

    def to_dict(self):
        return {"phi": list(self.phi), "average": self.average}

    def __eq__(self, other):
        if not isinstance(other, MomentSignature):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __repr__(self):
        return "MomentSignature(phi={}, average={})".format(self.phi, self.average)


# --------------------------------- edge map ---------------------------------


def _as_float_array(grid):
    if isinstance(grid, RealGrid):
        return grid.values
    return np.asarray(getattr(grid, "array", grid), dtype=np.float64)


def downscale(grid, s):
    """
    Reduce a grid by block averaging.

    Parameters
    ----------
    grid : :class:`medimark.imagecore.PixelGrid` or :class:`RealGrid`
        Source raster.

    s : int
        Block side, at least 2. Partial blocks at the right and bottom edge
        are averaged over the pixels they actually cover.

    Returns
    -------
    reduced : :class:`RealGrid`
        Grid of shape ``(ceil(H/s), ceil(W/s))``.
    """
    s = int(s)
    if s < 2:
        raise InvalidParams("downscale factor must be at least 2, got {}".format(s))
    src = _as_float_array(grid)
    height, width = src.shape
    rows = np.arange(0, height, s)
    cols = np.arange(0, width, s)
    sums = np.add.reduceat(np.add.reduceat(src, rows, axis=0), cols, axis=1)
    row_counts = np.minimum(s, height - rows)
    col_counts = np.minimum(s, width - cols)
    counts = np.outer(row_counts, col_counts).astype(np.float64)
    return RealGrid(sums / counts)


def log_kernel(sigma):
    """
    Zero-sum Laplacian of Gaussian kernel.

    The analytic LoG is sampled at integer offsets on a square support of
    side ``2 * ceil(3 * sigma) + 1``; the mean of the samples is then
    subtracted so that the kernel sums to zero.
    """
    sigma = float(sigma)
    if not sigma > 0:
        raise NonPositiveSigma("LoG sigma must be positive, got {}".format(sigma))
    half = int(math.ceil(3 * sigma))
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    x, y = np.meshgrid(offsets, offsets)
    r2 = (x * x + y * y) / (2 * sigma * sigma)
    kernel = -1.0 / (math.pi * sigma**4) * (1.0 - r2) * np.exp(-r2)
    kernel = kernel - kernel.mean()
    return RealGrid(kernel)


def log_response(grid, sigma):
    """
    Convolve a grid with :func:`log_kernel`, replicating the nearest edge
    value beyond the border. The output has the dimensions of the input.
    """
    kernel = log_kernel(sigma)
    values = _as_float_array(grid)
    return RealGrid(ndimage.convolve(values, kernel.values, mode="nearest"))


def edge_map(response, t_rel, scale=1):
    """
    Mark thresholded zero crossings of a LoG response.

    A cell is an edge when its right or lower neighbour has the opposite
    sign (strict, product < 0) and the two responses differ by at least
    ``t_rel * (max(response) - min(response))``.

    Parameters
    ----------
    response : :class:`RealGrid`
        Output of :func:`log_response`.

    t_rel : float
        Relative threshold in [0, 1].

    scale : int, optional
        Downscale factor recorded in the returned map.
    """
    t_rel = float(t_rel)
    if not 0.0 <= t_rel <= 1.0:
        raise InvalidParams("t_rel must lie in [0, 1], got {}".format(t_rel))
    r = response.values
    theta = t_rel * (float(r.max()) - float(r.min()))
    marked = np.zeros(r.shape, dtype=bool)

    right_a, right_b = r[:, :-1], r[:, 1:]
    marked[:, :-1] |= (right_a * right_b < 0) & (np.abs(right_a - right_b) >= theta)
    down_a, down_b = r[:-1, :], r[1:, :]
    marked[:-1, :] |= (down_a * down_b < 0) & (np.abs(down_a - down_b) >= theta)

    return EdgeMap(marked.astype(np.uint8), scale=scale)


def compute_edge_map(high, scale, sigma, t_rel):
    """
    Full edge-map pipeline on an LSB-zeroed grid: block reduction by
    ``scale``, LoG response, thresholded zero crossings.
    """
    reduced = downscale(high, scale)
    return edge_map(log_response(reduced, sigma), t_rel, scale=scale)


# ---------------------------------- moments ---------------------------------


def _raw_moments(arr):
    """
    Exact integer raw moments m_pq for p + q <= 3, accumulated row by row.
    """
    height, width = arr.shape
    data = arr.astype(np.int64)
    # largest per-row sum of x^p * I(x, y) is at p = 3
    peak = int(data.max(initial=0)) * (width * (width - 1) // 2) ** 2
    if peak <= np.iinfo(np.int64).max:
        xs = np.arange(width, dtype=np.int64)
    else:
        data = data.astype(object)
        xs = np.array([int(x) for x in range(width)], dtype=object)
    row_sums = [data @ xs**p for p in range(4)]
    ys = [int(y) for y in range(height)]
    m = {}
    for p in range(4):
        sums = [int(v) for v in row_sums[p]]
        for q in range(4 - p):
            m[p, q] = sum(s * y**q for s, y in zip(sums, ys))
    return m


def _central_moments(m):
    m00 = m[0, 0]
    xc = Fraction(m[1, 0], m00)
    yc = Fraction(m[0, 1], m00)
    mu = {
        (1, 1): m[1, 1] - xc * m[0, 1],
        (2, 0): m[2, 0] - xc * m[1, 0],
        (0, 2): m[0, 2] - yc * m[0, 1],
        (3, 0): m[3, 0] - 3 * xc * m[2, 0] + 2 * xc * xc * m[1, 0],
        (0, 3): m[0, 3] - 3 * yc * m[0, 2] + 2 * yc * yc * m[0, 1],
        (2, 1): m[2, 1] - 2 * xc * m[1, 1] - yc * m[2, 0] + 2 * xc * xc * m[0, 1],
        (1, 2): m[1, 2] - 2 * yc * m[1, 1] - xc * m[0, 2] + 2 * yc * yc * m[1, 0],
    }
    return mu


def hu_moments(grid):
    """
    Hu's seven moment invariants of a grayscale grid.

    Raw and central moments are accumulated exactly (integer and rational
    arithmetic); the normalized moments
    ``eta_pq = mu_pq / mu_00 ** (1 + (p + q) / 2)`` are the only binary64
    roundings, which makes the invariants bit-reproducible and exactly equal
    under quarter-turn rotations.

    Parameters
    ----------
    grid : :class:`medimark.imagecore.PixelGrid`

    Returns
    -------
    signature : :class:`MomentSignature`
    """
    m = _raw_moments(np.asarray(grid.array))
    m00 = m[0, 0]
    if m00 == 0:
        raise ZeroMass("all samples are zero, moments are undefined")
    mu = _central_moments(m)

    sqrt_m00 = math.sqrt(m00)
    eta = {}
    for (p, q), value in mu.items():
        scaled = float(Fraction(value) / (m00 * m00))
        eta[p, q] = scaled if p + q == 2 else scaled / sqrt_m00

    n20, n02, n11 = eta[2, 0], eta[0, 2], eta[1, 1]
    n30, n03, n21, n12 = eta[3, 0], eta[0, 3], eta[2, 1], eta[1, 2]

    a = n30 - 3 * n12
    b = 3 * n21 - n03
    c = n30 + n12
    d = n21 + n03

    phi1 = n20 + n02
    phi2 = (n20 - n02) ** 2 + 4 * n11**2
    phi3 = a**2 + b**2
    phi4 = c**2 + d**2
    phi5 = a * c * (c**2 - 3 * d**2) + b * d * (3 * c**2 - d**2)
    phi6 = (n20 - n02) * (c**2 - d**2) + 4 * n11 * (c * d)
    phi7 = b * c * (c**2 - 3 * d**2) - a * d * (3 * c**2 - d**2)
    return MomentSignature([phi1, phi2, phi3, phi4, phi5, phi6, phi7])
