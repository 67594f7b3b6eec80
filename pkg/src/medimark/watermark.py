"""
This module contains the watermarking pipelines: construction of the
watermarked image, extraction of the embedded patient data, integrity
verification and localization of tampered areas.

The watermark lives in the least significant bit plane outside the region of
interest. The LSBs of the last 320 raster positions hold a fixed header; the
encrypted payload fills the remaining non-ROI positions in ascending raster
order and every unused position is set to zero. Pixels of the ROI are never
modified. Signatures are always computed on the image with its LSB plane
cleared, so writing the watermark does not disturb them.
"""
import collections
import math

import numpy as np
from Crypto.Random import get_random_bytes
from scipy import ndimage

import medimark.logging_utils as logging
from medimark._header import HEADER_BITS, HeaderBlock, HeaderError
from medimark.errors import (
    CrcMismatch,
    InsufficientCapacity,
    InvalidParams,
    MalformedPayload,
    MalformedRecord,
    NonPositiveSigma,
    NothingToLocate,
    NotWatermarked,
    PayloadUnreadable,
    RoiOverlapsHeader,
    ZeroMass,
)
from medimark.feature import compute_edge_map, hu_moments
from medimark.imagecore import (
    BitPlane,
    RoiRect,
    merge_lsb,
    raster_positions_outside,
    split_lsb,
)
from medimark.payload import (
    NONCE_SIZE,
    build_plaintext,
    decrypt,
    encrypt,
    parse_plaintext,
    plaintext_size,
    serialize_record,
)
from medimark.report import TamperReport, TamperStatus
from medimark.scramble import pad_map, scramble_map, unpad_map, unscramble_map

logger = logging.get_logger(__name__)

__all__ = [
    "EmbedParams",
    "Extraction",
    "TamperLocation",
    "MOMENT_RTOL",
    "capacity",
    "payload_bits",
    "embed",
    "extract",
    "verify",
    "locate",
]

SCALES = (2, 4)
MOMENT_RTOL = 1e-12


class EmbedParams:
    """
    Parameters of the edge-map signature.

    Attributes
    ----------
    scale : int
        Downscale factor, 2 or 4. Travels in the watermark header.

    sigma : float
        Standard deviation of the Laplacian of Gaussian, positive.

    t_rel : float
        Zero-crossing threshold relative to the response range, in [0, 1].

    ``sigma`` and ``t_rel`` are not stored in the image; the verifier must be
    configured with the values used at embedding.
    """

    def __init__(self, scale=2, sigma=2.0, t_rel=0.04):
        if isinstance(scale, bool) or int(scale) != scale or int(scale) not in SCALES:
            raise InvalidParams("scale must be one of {}, got {}".format(SCALES, scale))
        sigma = float(sigma)
        if not sigma > 0 or not math.isfinite(sigma):
            raise NonPositiveSigma("sigma must be positive, got {}".format(sigma))
        t_rel = float(t_rel)
        if not 0.0 <= t_rel <= 1.0:
            raise InvalidParams("t_rel must lie in [0, 1], got {}".format(t_rel))
        self.scale = int(scale)
        self.sigma = sigma
        self.t_rel = t_rel

    @classmethod
    def from_options(cls, options=None):
        """
        Build parameters from an options dictionary with the keys
        ``"scale"``, ``"sigma"`` and ``"t_rel"``; missing keys take their
        defaults.
        """
        options = options or {}
        unknown = set(options) - {"scale", "sigma", "t_rel"}
        if unknown:
            raise InvalidParams("unknown parameters: {}".format(sorted(unknown)))
        return cls(
            scale=options.get("scale", 2),
            sigma=options.get("sigma", 2.0),
            t_rel=options.get("t_rel", 0.04),
        )

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return EmbedParams(**values)

    def to_dict(self):
        return {"scale": self.scale, "sigma": self.sigma, "t_rel": self.t_rel}

    def __eq__(self, other):
        if not isinstance(other, EmbedParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return "EmbedParams(scale={}, sigma={}, t_rel={})".format(
            self.scale, self.sigma, self.t_rel
        )


Extraction = collections.namedtuple(
    "Extraction", ["record", "signature", "edge_map", "roi", "params", "header"]
)
Extraction.__doc__ = """
Data read back from a watermarked image.

``edge_map`` is the :class:`medimark.scramble.PaddedMap` as embedded
(scrambled) unless extraction was asked to unscramble it.
"""

TamperLocation = collections.namedtuple("TamperLocation", ["mask", "regions", "report"])
TamperLocation.__doc__ = """
Full resolution :class:`medimark.imagecore.BitPlane` marking every pixel
covered by a mismatching map cell, the bounding rectangles of the
8-connected mismatch groups and the underlying :class:`TamperReport`.
"""


# --------------------------------- layout -----------------------------------


def _map_dims(width, height, scale):
    return -(-width // scale), -(-height // scale)


def _check_layout(width, height, roi):
    n = width * height
    if n <= HEADER_BITS:
        raise InsufficientCapacity(
            "a {}x{} image cannot hold the {}-bit header".format(
                width, height, HEADER_BITS
            )
        )
    roi.check_fits(width, height)
    last = (roi.y + roi.h - 1) * width + (roi.x + roi.w - 1)
    if last >= n - HEADER_BITS:
        raise RoiOverlapsHeader(
            "ROI {} reaches into the header area (last {} raster positions)".format(
                roi, HEADER_BITS
            )
        )


def capacity(width, height, roi, s=2):
    """
    Number of payload bits available outside the ROI and the header.

    Parameters
    ----------
    width, height : int
        Image dimensions.

    roi : :class:`medimark.imagecore.RoiRect`
        Must fit the image and end before the header area.

    s : int, optional
        Map downscale factor; does not affect the result but is validated.

    Returns
    -------
    bits : int
        ``width * height - roi.w * roi.h - 320``.
    """
    if s not in SCALES:
        raise InvalidParams("scale must be one of {}, got {}".format(SCALES, s))
    _check_layout(width, height, roi)
    return width * height - roi.area - HEADER_BITS


def payload_bits(record, width, height, scale=2):
    """
    Number of payload bits an embedding of ``record`` needs.
    """
    map_w, map_h = _map_dims(width, height, scale)
    return 8 * plaintext_size(len(serialize_record(record)), map_w, map_h)


def _payload_positions(width, height, roi):
    positions = raster_positions_outside(width, height, roi)
    return positions[positions < width * height - HEADER_BITS]


# ---------------------------------- embed -----------------------------------


def embed(image, roi, record, key, params=None, nonce=None):
    """
    Construct the watermarked image.

    Parameters
    ----------
    image : :class:`medimark.imagecore.PixelGrid`
        Original image.

    roi : :class:`medimark.imagecore.RoiRect`
        Region whose pixels are preserved bit for bit.

    record : dict of str to str
        Patient record to hide.

    key : :class:`medimark.payload.SecretKey`

    params : :class:`EmbedParams`, optional

    nonce : bytes, optional
        16-octet initial counter block. A fresh random nonce is drawn when
        omitted; passing one makes the embedding deterministic.

    Returns
    -------
    watermarked : :class:`medimark.imagecore.PixelGrid`
    """
    params = params or EmbedParams()
    width, height = image.width, image.height
    if max(roi.x, roi.y, roi.w, roi.h) > 0xFFFF:
        raise InvalidParams("ROI coordinates must fit in 16 bits")
    available = capacity(width, height, roi, params.scale)
    needed = payload_bits(record, width, height, params.scale)
    if needed > available:
        raise InsufficientCapacity(
            "payload needs {} bits but only {} are available outside the "
            "ROI".format(needed, available)
        )

    high, lsb = split_lsb(image)
    signature = hu_moments(high)
    edges = compute_edge_map(high, params.scale, params.sigma, params.t_rel)
    plain = build_plaintext(record, signature, scramble_map(pad_map(edges)))

    nonce = get_random_bytes(NONCE_SIZE) if nonce is None else bytes(nonce)
    cipher = encrypt(plain, key, nonce)
    bits = np.unpackbits(np.frombuffer(cipher, dtype=np.uint8))

    flat = lsb.bits.reshape(-1).copy()
    positions = _payload_positions(width, height, roi)
    flat[positions] = 0
    flat[positions[: bits.size]] = bits
    header = HeaderBlock(roi, params.scale, len(cipher), nonce)
    flat[-HEADER_BITS:] = header.to_bits()

    logger.info(
        "embedded %d payload bits of %d available (scale %d, %d edge cells)",
        bits.size,
        available,
        params.scale,
        edges.count(),
    )
    return merge_lsb(high, BitPlane(flat.reshape(height, width)))


# --------------------------------- extract ----------------------------------


def _read_header(image):
    width, height = image.width, image.height
    flat = image.samples & 1
    if flat.size <= HEADER_BITS:
        raise NotWatermarked("image is too small to carry a watermark header")
    try:
        header = HeaderBlock.from_bits(flat[-HEADER_BITS:])
    except HeaderError as err:
        raise NotWatermarked("no watermark header found: {}".format(err)) from None
    if header.scale not in SCALES:
        raise NotWatermarked("header scale {} is invalid".format(header.scale))
    try:
        available = capacity(width, height, header.roi, header.scale)
    except ValueError as err:
        raise NotWatermarked("header ROI is inconsistent: {}".format(err)) from None
    if 8 * header.payload_len > available:
        raise NotWatermarked("header payload length exceeds the image capacity")
    return header, flat


def extract(image, key, params=None, unscramble=False):
    """
    Read the patient record, the moment signature and the edge map back
    from a watermarked image.

    Parameters
    ----------
    image : :class:`medimark.imagecore.PixelGrid`

    key : :class:`medimark.payload.SecretKey`

    params : :class:`EmbedParams`, optional
        Verifier configuration; only ``sigma`` and ``t_rel`` are used, the
        scale is read from the header.

    unscramble : bool, optional
        Return the edge map in its original block arrangement instead of
        the scrambled form stored in the payload.

    Returns
    -------
    extraction : :class:`Extraction`
    """
    params = params or EmbedParams()
    header, flat = _read_header(image)
    positions = _payload_positions(image.width, image.height, header.roi)
    bits = flat[positions[: 8 * header.payload_len]]
    cipher = np.packbits(bits).tobytes()
    plain = decrypt(cipher, key, header.nonce)

    map_w, map_h = _map_dims(image.width, image.height, header.scale)
    try:
        record, signature, padded = parse_plaintext(plain, map_w, map_h, header.scale)
    except (CrcMismatch, MalformedPayload, MalformedRecord) as err:
        raise PayloadUnreadable(
            "payload could not be read (wrong key or damaged watermark): "
            "{}".format(err)
        ) from None
    if unscramble:
        padded = unscramble_map(padded)
    logger.debug("extracted payload of %d bytes", header.payload_len)
    return Extraction(
        record, signature, padded, header.roi, params.replace(scale=header.scale), header
    )


# ---------------------------------- verify ----------------------------------


def _regions(mismatch, scale, width, height):
    """
    Bounding rectangles in image coordinates of the 8-connected groups of
    set cells, in raster order of their first cell.
    """
    labels, n = ndimage.label(mismatch, structure=np.ones((3, 3), dtype=int))
    regions = []
    for rows, cols in ndimage.find_objects(labels)[:n]:
        x, y = cols.start * scale, rows.start * scale
        x_end = min(cols.stop * scale, width)
        y_end = min(rows.stop * scale, height)
        regions.append(RoiRect(x, y, x_end - x, y_end - y))
    return regions


def verify(image, key, params=None):
    """
    Check the integrity of a watermarked image.

    The moment signature and the edge map are recomputed on the LSB-zeroed
    image and compared with the embedded ones. Problems with the watermark
    itself are reported through the status rather than raised.

    Parameters
    ----------
    image : :class:`medimark.imagecore.PixelGrid`

    key : :class:`medimark.payload.SecretKey`

    params : :class:`EmbedParams`, optional
        Verifier configuration (``sigma`` and ``t_rel`` used at embedding).

    Returns
    -------
    report : :class:`medimark.report.TamperReport`
    """
    try:
        ext = extract(image, key, params, unscramble=True)
    except NotWatermarked as err:
        logger.info("verify: %s", err)
        return TamperReport(TamperStatus.NOT_WATERMARKED, message=str(err))
    except PayloadUnreadable as err:
        logger.info("verify: %s", err)
        return TamperReport(TamperStatus.PAYLOAD_UNREADABLE, message=str(err))

    scale = ext.params.scale
    high, _ = split_lsb(image)
    try:
        recomputed = hu_moments(high)
        moment_match = ext.signature.matches(recomputed, rtol=MOMENT_RTOL)
    except ZeroMass:
        recomputed, moment_match = None, False

    edges = compute_edge_map(high, scale, ext.params.sigma, ext.params.t_rel)
    mismatch = edges.bits ^ unpad_map(ext.edge_map).bits
    cells = int(mismatch.sum())

    if moment_match and cells == 0:
        status = TamperStatus.INTACT
        regions = []
        message = "image is intact"
    else:
        status = TamperStatus.TAMPERED
        regions = _regions(mismatch, scale, image.width, image.height)
        message = "image was modified: {}, {} mismatching map cells".format(
            "moments agree" if moment_match else "moments differ", cells
        )
    logger.info("verify: %s", message)
    return TamperReport(
        status,
        moment_match=moment_match,
        mismatch_cells=cells,
        regions=regions,
        extracted_signature=ext.signature,
        recomputed_signature=recomputed,
        mismatch=mismatch,
        scale=scale,
        message=message,
    )


def locate(image, key, params=None):
    """
    Map the tampered edge-map cells back to full resolution.

    Returns
    -------
    location : :class:`TamperLocation`
        ``mask`` has a 1 on every pixel of every mismatching ``s`` x ``s``
        cell; ``regions`` are those of the report.

    Raises
    ------
    NotWatermarked
        No watermark header was found.
    PayloadUnreadable
        The header was found but the payload could not be recovered.
    NothingToLocate
        The image verified as intact.
    """
    report = verify(image, key, params)
    if report.status is TamperStatus.NOT_WATERMARKED:
        raise NotWatermarked(report.message)
    if report.status is TamperStatus.PAYLOAD_UNREADABLE:
        raise PayloadUnreadable(report.message)
    if report.status is not TamperStatus.TAMPERED:
        raise NothingToLocate(
            "nothing to locate, image status is {}".format(report.status.value)
        )
    s = report.scale
    block = np.ones((s, s), dtype=np.uint8)
    mask = np.kron(report.mismatch, block)[: image.height, : image.width]
    return TamperLocation(BitPlane(mask), report.regions, report)
