"""
This module contains the TamperReport class that stores and reports the
outcome of an integrity check of a watermarked image.
"""
import enum
import json
import textwrap

from medimark.imagecore import atomic_write_bytes

__all__ = ["TamperStatus", "TamperReport"]


class TamperStatus(str, enum.Enum):
    INTACT = "Intact"
    TAMPERED = "Tampered"
    PAYLOAD_UNREADABLE = "PayloadUnreadable"
    NOT_WATERMARKED = "NotWatermarked"

    def __str__(self):
        return self.value


class TamperReport:
    """
    Class for storing the result of :func:`medimark.watermark.verify`.

    Attributes
    ----------
    status : :class:`TamperStatus`
        Overall verdict.

    moment_match : bool
        Whether every recomputed moment invariant (and their average) agrees
        with the embedded one within the relative tolerance.

    mismatch_cells : int
        Number of edge-map cells that differ between the extracted and the
        recomputed map, padding excluded.

    regions : list of :class:`medimark.imagecore.RoiRect`
        Bounding rectangles, in image coordinates, of the 8-connected groups
        of mismatching cells.

    extracted_signature, recomputed_signature : :class:`MomentSignature`
        ``None`` when the payload could not be read.

    mismatch : ndarray of uint8 or None
        Unpadded XOR of the two maps at map scale.

    scale : int or None
        Map downscale factor read from the header.

    message : str
        Human readable explanation of the status.
    """

    def __init__(
        self,
        status,
        moment_match=False,
        mismatch_cells=0,
        regions=None,
        extracted_signature=None,
        recomputed_signature=None,
        mismatch=None,
        scale=None,
        message="",
    ):
        self.status = TamperStatus(status)
        self.moment_match = bool(moment_match)
        self.mismatch_cells = int(mismatch_cells)
        self.regions = list(regions or [])
        self.extracted_signature = extracted_signature
        self.recomputed_signature = recomputed_signature
        self.mismatch = mismatch
        self.scale = scale
        self.message = message
        if self.status is TamperStatus.INTACT and (
            not self.moment_match or self.mismatch_cells
        ):
            raise ValueError("an intact report needs matching moments and maps")
        if self.regions and self.status is not TamperStatus.TAMPERED:
            raise ValueError("only a tampered report can carry regions")

    @property
    def intact(self):
        return self.status is TamperStatus.INTACT

    def __str__(self):
        return textwrap.dedent(
            r"""
        Tamper Report
        --------------------------
        - Status: {status}
        - Moments match: {moment_match}
        - Mismatching map cells: {cells}
        - Tampered regions: {regions}
        - {message}
        """.format(
                status=self.status.value,
                moment_match=self.moment_match,
                cells=self.mismatch_cells,
                regions=", ".join(str(r) for r in self.regions) or "none",
                message=self.message,
            )
        ).strip()

    def __repr__(self):
        return self.__str__()

    def to_dict(self):
        """
        JSON-compatible form with the key names of the command-line report.
        """

        def sig(s):
            return None if s is None else s.to_dict()

        return {
            "status": self.status.value,
            "momentMatch": self.moment_match,
            "mapMismatchCells": self.mismatch_cells,
            "regions": [r.to_dict() for r in self.regions],
            "extractedSignature": sig(self.extracted_signature),
            "recomputedSignature": sig(self.recomputed_signature),
            "message": self.message,
        }

    def to_json(self, indent=None):
        return json.dumps(self.to_dict(), indent=indent)

    def dump(self, filename):
        """
        Save the report as JSON.
        """
        atomic_write_bytes(filename, (self.to_json(indent=2) + "\n").encode("utf-8"))
