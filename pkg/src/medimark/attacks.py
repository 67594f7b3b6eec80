"""
Synthetic tampering operations used to exercise the integrity checks.

Content attacks change bits 1-7 only and leave the LSB plane, and therefore
the watermark, untouched; :func:`flip_lsb` damages the watermark itself.
"""
import numpy as np

from medimark.imagecore import PixelGrid, RoiRect

__all__ = ["brighten_patch", "set_region", "add_noise", "flip_lsb"]


def _split(image):
    arr = image.array.astype(np.int16)
    return arr & 0xFE, arr & 1


def _region(image, rect):
    if not isinstance(rect, RoiRect):
        rect = RoiRect(*rect)
    rect.check_fits(image.width, image.height)
    return slice(rect.y, rect.y + rect.h), slice(rect.x, rect.x + rect.w)


def brighten_patch(image, rect, delta=64):
    """
    Add ``delta`` to the high planes of every pixel inside ``rect``,
    saturating at 254 (0 for negative deltas), LSBs preserved.
    """
    high, lsb = _split(image)
    rows, cols = _region(image, rect)
    high[rows, cols] = np.clip(high[rows, cols] + 2 * (int(delta) // 2), 0, 254)
    return PixelGrid(high | lsb)


def set_region(image, rect, value):
    """
    Overwrite the high planes inside ``rect`` with ``value`` (its LSB is
    ignored), as a copy-move or erase attack would.
    """
    high, lsb = _split(image)
    rows, cols = _region(image, rect)
    high[rows, cols] = int(value) & 0xFE
    return PixelGrid(high | lsb)


def add_noise(image, sigma, seed=None, rect=None):
    """
    Add rounded Gaussian noise to the high planes, either everywhere or
    inside ``rect`` only.
    """
    rng = np.random.default_rng(seed)
    high, lsb = _split(image)
    rows, cols = (slice(None), slice(None)) if rect is None else _region(image, rect)
    target = high[rows, cols]
    noise = 2 * np.rint(rng.normal(0.0, sigma / 2.0, target.shape)).astype(np.int16)
    high[rows, cols] = np.clip(target + noise, 0, 254)
    return PixelGrid(high | lsb)


def flip_lsb(image, index):
    """
    Invert the least significant bit of the pixel at row-major ``index``.
    """
    flat = image.array.reshape(-1).copy()
    flat[index] ^= 1
    return PixelGrid(flat.reshape(image.shape))
