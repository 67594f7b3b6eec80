"""
Shared fixtures: a fixed key and a synthetic phantom with one elliptical
structure, plus its watermarked copy.
"""
import numpy as np
import pytest

from medimark.imagecore import PixelGrid, RoiRect
from medimark.payload import SecretKey
from medimark.watermark import EmbedParams, embed

KEY_HEX = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f"
NONCE = bytes(range(16))
PHANTOM_ROI = RoiRect(96, 96, 64, 64)
RECORD = {"id": "P-0042", "name": "Jane Roe", "modality": "MG", "study": "left CC"}


def make_phantom(width=256, height=256):
    """
    Background 30; an ellipse centred in the image with radii 90 (x) and
    70 (y) whose interior is a gentle horizontal ramp from 150.
    """
    ys, xs = np.mgrid[0:height, 0:width]
    cx, cy = width / 2, height / 2
    inside = ((xs - cx) / 90.0) ** 2 + ((ys - cy) / 70.0) ** 2 <= 1.0
    arr = np.full((height, width), 30, dtype=np.int64)
    arr[inside] = 150 + (30 * xs[inside]) // width
    return PixelGrid(arr)


@pytest.fixture
def key():
    return SecretKey.from_hex(KEY_HEX)


@pytest.fixture
def phantom():
    return make_phantom()


@pytest.fixture
def params():
    return EmbedParams()


@pytest.fixture
def watermarked(phantom, key, params):
    return embed(phantom, PHANTOM_ROI, RECORD, key, params, nonce=NONCE)
