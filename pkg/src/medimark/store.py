"""
This module contains a filesystem-backed store for watermarked images.

Layout of a store directory::

    objects/<id>.pgm   watermarked images
    archive/<id>.pgm   unmodified originals (when archived)
    index.jsonl        one JSON entry per ingested image, append only
    index.lock         locked by the OS while a writer holds the store

The id of an entry is the SHA-256 of the canonical PGM bytes of the original
image. Files are written through a temporary file and a rename, and the
index line is appended last, so an interrupted ingest never leaves an index
entry pointing at a missing or partial object. An index line only counts once
its terminating newline has been written.
"""
import contextlib
import datetime
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import medimark.logging_utils as logging
from medimark.errors import (
    CorruptIndex,
    CorruptObject,
    DuplicateRecord,
    ImageFormatError,
    NotArchived,
    StoreLocked,
    UnknownId,
)
from medimark.imagecore import RoiRect, atomic_write_bytes, read_pgm, write_pgm
from medimark.watermark import EmbedParams, embed, verify

logger = logging.get_logger(__name__)

__all__ = ["IndexEntry", "Store", "record_id"]

if os.name == "nt":
    import msvcrt

    def _lock_fd(fd):
        os.lseek(fd, 0, os.SEEK_SET)
        msvcrt.locking(fd, msvcrt.LK_NBLCK, 1)

    def _unlock_fd(fd):
        os.lseek(fd, 0, os.SEEK_SET)
        msvcrt.locking(fd, msvcrt.LK_UNLCK, 1)

else:
    import fcntl

    def _lock_fd(fd):
        fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)

    def _unlock_fd(fd):
        fcntl.flock(fd, fcntl.LOCK_UN)


def record_id(image):
    """
    Id of an image: lowercase hex SHA-256 of its canonical PGM encoding.
    """
    return hashlib.sha256(write_pgm(image)).hexdigest()


@dataclass(frozen=True)
class IndexEntry:
    """
    One line of ``index.jsonl``.

    Attributes
    ----------
    id : str
        64 lowercase hex characters.

    patient_id : str
        Value of the record's ``"id"`` key, empty when absent.

    roi : :class:`medimark.imagecore.RoiRect`

    created_at : str
        UTC timestamp in ISO 8601 form.

    scale : int
        Edge-map downscale factor used at embedding.

    archived : bool
        Whether the original is kept under ``archive/``.
    """

    id: str
    patient_id: str
    roi: RoiRect
    created_at: str
    scale: int
    archived: bool = True

    def to_dict(self):
        return {
            "id": self.id,
            "patientId": self.patient_id,
            "roi": self.roi.to_dict(),
            "createdAt": self.created_at,
            "s": self.scale,
            "archived": self.archived,
        }

    def to_line(self):
        return (
            json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
        ).encode("utf-8")

    @classmethod
    def from_dict(cls, data):
        roi = data["roi"]
        entry = cls(
            id=data["id"],
            patient_id=data["patientId"],
            roi=RoiRect(roi["x"], roi["y"], roi["w"], roi["h"]),
            created_at=data["createdAt"],
            scale=data["s"],
            archived=data.get("archived", True),
        )
        if not isinstance(entry.id, str) or len(entry.id) != 64:
            raise ValueError("entry id must be 64 hex characters")
        return entry


class Store:
    """
    Store of watermarked images rooted at a directory.

    Parameters
    ----------
    root : str or path-like
        Store directory. It is created, with its layout, on first ingest.

    Many readers may use a store concurrently; writers serialize through an
    exclusive lock on the ``index.lock`` file and fail with
    :class:`medimark.errors.StoreLocked` instead of waiting. The lock is
    released by the OS if its holder dies, so a killed writer never leaves the
    store locked.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.objects_dir = self.root / "objects"
        self.archive_dir = self.root / "archive"
        self.index_path = self.root / "index.jsonl"
        self.lock_path = self.root / "index.lock"

    def init(self):
        """
        Create the store layout if it does not exist yet.
        """
        self.objects_dir.mkdir(parents=True, exist_ok=True)
        self.archive_dir.mkdir(parents=True, exist_ok=True)
        self.index_path.touch(exist_ok=True)
        return self

    @contextlib.contextmanager
    def _locked(self):
        # the lock lives on the open file, so the OS drops it when the holder
        # exits or is killed; the file itself stays in place
        fd = os.open(self.lock_path, os.O_CREAT | os.O_RDWR)
        try:
            try:
                _lock_fd(fd)
            except OSError:
                raise StoreLocked(
                    "store {} is locked by another writer ({})".format(
                        self.root, self.lock_path
                    )
                ) from None
            try:
                os.ftruncate(fd, 0)
                os.write(fd, str(os.getpid()).encode("ascii"))
                yield
            finally:
                _unlock_fd(fd)
        finally:
            os.close(fd)

    def is_locked(self):
        """
        Whether a writer currently holds the store.
        """
        try:
            with self._locked():
                return False
        except StoreLocked:
            return True
        except FileNotFoundError:
            return False

    # ------------------------------- index ----------------------------------

    def _read_index(self):
        try:
            data = self.index_path.read_bytes()
        except FileNotFoundError:
            return []
        lines = data.split(b"\n")
        # the last element is an uncommitted partial line (or empty)
        entries = []
        for number, line in enumerate(lines[:-1], start=1):
            try:
                entries.append(IndexEntry.from_dict(json.loads(line.decode("utf-8"))))
            except (ValueError, KeyError, TypeError) as err:
                raise CorruptIndex(
                    "index line {} is corrupt: {}".format(number, err), number
                ) from None
        if lines[-1]:
            logger.warning("ignoring uncommitted partial line at end of index")
        return entries

    def _append_index(self, entry):
        with open(self.index_path, "r+b") as fh:
            data = fh.read()
            if data and not data.endswith(b"\n"):
                # drop a partial line left by an interrupted append
                fh.truncate(data.rfind(b"\n") + 1)
            fh.seek(0, os.SEEK_END)
            fh.write(entry.to_line())
            fh.flush()
            os.fsync(fh.fileno())

    def list(self):
        """
        Index entries in insertion order.
        """
        return self._read_index()

    def entry(self, record_id):
        for entry in self._read_index():
            if entry.id == record_id:
                return entry
        raise UnknownId("no entry with id {}".format(record_id))

    def __contains__(self, record_id):
        return any(e.id == record_id for e in self._read_index())

    def __len__(self):
        return len(self._read_index())

    # ------------------------------- objects --------------------------------

    def _object_path(self, record_id):
        return self.objects_dir / "{}.pgm".format(record_id)

    def _archive_path(self, record_id):
        return self.archive_dir / "{}.pgm".format(record_id)

    def ingest(
        self, image, roi, record, key, params=None, archive_original=True, nonce=None
    ):
        """
        Watermark an image and store it.

        Parameters
        ----------
        image : :class:`medimark.imagecore.PixelGrid`
            Original image.

        roi, record, key, params, nonce
            As for :func:`medimark.watermark.embed`.

        archive_original : bool, optional
            Keep a copy of the original under ``archive/``.

        Returns
        -------
        record_id : str
        """
        params = params or EmbedParams()
        self.init()
        original = write_pgm(image)
        new_id = hashlib.sha256(original).hexdigest()
        with self._locked():
            if any(e.id == new_id for e in self._read_index()):
                raise DuplicateRecord("image {} is already stored".format(new_id))
            watermarked = embed(image, roi, record, key, params, nonce=nonce)
            if archive_original:
                atomic_write_bytes(self._archive_path(new_id), original)
            atomic_write_bytes(self._object_path(new_id), write_pgm(watermarked))
            entry = IndexEntry(
                id=new_id,
                patient_id=str(record.get("id", "")),
                roi=roi,
                created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(
                    timespec="seconds"
                ),
                scale=params.scale,
                archived=bool(archive_original),
            )
            self._append_index(entry)
        logger.info("ingested %s (archived: %s)", new_id, archive_original)
        return new_id

    def _load(self, path, what):
        try:
            return read_pgm(path.read_bytes())
        except FileNotFoundError:
            raise CorruptObject("{} file {} is missing".format(what, path)) from None
        except ImageFormatError as err:
            raise CorruptObject(
                "{} file {} cannot be decoded: {}".format(what, path, err)
            ) from None

    def fetch(self, record_id):
        """
        The watermarked image stored under ``record_id``.
        """
        self.entry(record_id)
        logger.debug("fetch %s", record_id)
        return self._load(self._object_path(record_id), "object")

    def fetch_original(self, record_id):
        """
        The archived original of ``record_id``.
        """
        entry = self.entry(record_id)
        if not entry.archived:
            raise NotArchived("the original of {} was not archived".format(record_id))
        return self._load(self._archive_path(record_id), "archive")

    def verify(self, record_id, key, params=None):
        """
        Check the integrity of a stored watermarked image.

        Returns
        -------
        report : :class:`medimark.report.TamperReport`
        """
        return verify(self.fetch(record_id), key, params)
