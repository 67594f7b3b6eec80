"""
Tests for the record store.
"""
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

import medimark
from conftest import NONCE, PHANTOM_ROI, RECORD, make_phantom
from medimark.attacks import brighten_patch, flip_lsb
from medimark.errors import (
    CorruptIndex,
    CorruptObject,
    DuplicateRecord,
    InsufficientCapacity,
    NotArchived,
    StoreLocked,
    UnknownId,
)
from medimark.imagecore import RoiRect, save_pgm, write_pgm
from medimark.report import TamperStatus
from medimark.store import IndexEntry, Store, record_id


@pytest.fixture
def store(tmp_path):
    return Store(tmp_path / "store")


def _variants(phantom, count):
    # distinct originals: flip one background LSB each
    return [flip_lsb(phantom, i) for i in range(count)]


def test_ingest_fetch(store, phantom, watermarked, key):
    new_id = store.ingest(phantom, PHANTOM_ROI, RECORD, key, nonce=NONCE)
    assert new_id == record_id(phantom)
    assert len(new_id) == 64
    assert new_id in store and len(store) == 1
    assert store.fetch(new_id) == watermarked
    assert store.fetch_original(new_id) == phantom
    assert (store.objects_dir / (new_id + ".pgm")).read_bytes() == write_pgm(
        watermarked
    )
    assert store.verify(new_id, key).status is TamperStatus.INTACT
    assert not store.is_locked()


def test_index_entry(store, phantom, key, params):
    new_id = store.ingest(phantom, PHANTOM_ROI, RECORD, key, params)
    (entry,) = store.list()
    assert entry == store.entry(new_id)
    assert (entry.id, entry.patient_id, entry.roi, entry.scale, entry.archived) == (
        new_id,
        "P-0042",
        PHANTOM_ROI,
        2,
        True,
    )
    line = store.index_path.read_bytes()
    assert line.endswith(b"\n") and line.count(b"\n") == 1
    data = json.loads(line)
    assert set(data) == {"id", "patientId", "roi", "createdAt", "s", "archived"}
    assert IndexEntry.from_dict(data) == entry


def test_ingest_without_archive(store, phantom, key):
    new_id = store.ingest(phantom, PHANTOM_ROI, {}, key, archive_original=False)
    assert store.entry(new_id).patient_id == ""
    assert not store.entry(new_id).archived
    assert os.listdir(store.archive_dir) == []
    with pytest.raises(NotArchived):
        store.fetch_original(new_id)
    store.fetch(new_id)


def test_duplicate_ingest(store, phantom, key):
    store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    with pytest.raises(DuplicateRecord):
        store.ingest(phantom, PHANTOM_ROI, {"id": "other"}, key)
    assert len(store) == 1


def test_failed_embed_leaves_no_trace(store, key):
    with pytest.raises(InsufficientCapacity):
        store.ingest(make_phantom(32, 32), RoiRect(0, 0, 8, 8), RECORD, key)
    assert len(store) == 0
    assert os.listdir(store.objects_dir) == []
    assert not store.is_locked()


def test_list_order(store, phantom, key):
    images = _variants(phantom, 3)
    ids = [
        store.ingest(img, PHANTOM_ROI, {"id": str(i)}, key)
        for i, img in enumerate(images)
    ]
    assert [e.id for e in store.list()] == ids
    assert [e.patient_id for e in store.list()] == ["0", "1", "2"]


def test_empty_store(store):
    assert store.list() == []
    assert len(store) == 0
    with pytest.raises(UnknownId):
        store.fetch("0" * 64)
    store.init()
    assert store.list() == []


def test_unknown_id(store, phantom, key):
    store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    with pytest.raises(UnknownId):
        store.entry("f" * 64)
    with pytest.raises(UnknownId):
        store.fetch_original("f" * 64)


def test_corrupt_object(store, phantom, key):
    new_id = store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    path = store.objects_dir / (new_id + ".pgm")
    path.write_bytes(path.read_bytes()[:100])
    with pytest.raises(CorruptObject):
        store.fetch(new_id)
    path.unlink()
    with pytest.raises(CorruptObject):
        store.fetch(new_id)


def test_corrupt_index_reports_line(store, phantom, key):
    store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    with open(store.index_path, "ab") as fh:
        fh.write(b"not json\n")
    with pytest.raises(CorruptIndex) as info:
        store.list()
    assert info.value.line_number == 2


def test_partial_index_line_is_ignored(store, phantom, key):
    first, second = _variants(phantom, 2)
    first_id = store.ingest(first, PHANTOM_ROI, RECORD, key)
    with open(store.index_path, "ab") as fh:
        fh.write(b'{"id":"ab')
    assert [e.id for e in store.list()] == [first_id]
    second_id = store.ingest(second, PHANTOM_ROI, RECORD, key)
    assert [e.id for e in store.list()] == [first_id, second_id]
    assert store.index_path.read_bytes().count(b"\n") == 2


def test_store_locked(store, phantom, key):
    store.init()
    with store._locked():
        assert store.is_locked()
        with pytest.raises(StoreLocked):
            store.ingest(phantom, PHANTOM_ROI, RECORD, key)
        assert len(store) == 0
        # readers are not blocked
        assert store.list() == []
    assert not store.is_locked()
    store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    assert len(store) == 1


def test_leftover_lock_file(store, phantom, key):
    # a lock file left behind by a writer that is gone holds no lock
    store.init()
    store.lock_path.write_bytes(b"999999")
    assert not store.is_locked()
    new_id = store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    assert [e.id for e in store.list()] == [new_id]


_HOLD_LOCK = """
import sys, time
from medimark.store import Store
with Store(sys.argv[1])._locked():
    print("locked", flush=True)
    time.sleep(60)
"""


def test_killed_writer_releases_lock(store, phantom, key):
    store.init()
    env = dict(os.environ)
    src = str(Path(medimark.__file__).resolve().parents[1])
    env["PYTHONPATH"] = os.pathsep.join(filter(None, [src, env.get("PYTHONPATH")]))
    writer = subprocess.Popen(
        [sys.executable, "-c", _HOLD_LOCK, str(store.root)],
        stdout=subprocess.PIPE,
        env=env,
    )
    try:
        assert writer.stdout.readline().strip() == b"locked"
        with pytest.raises(StoreLocked):
            store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    finally:
        writer.kill()
        writer.wait()
        writer.stdout.close()
    assert store.lock_path.exists()
    new_id = store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    assert [e.id for e in store.list()] == [new_id]


@pytest.mark.parametrize("failing_call", [1, 2])
def test_interrupted_ingest(store, phantom, key, monkeypatch, failing_call):
    real_replace = os.replace
    calls = []

    def flaky_replace(src, dst):
        calls.append(dst)
        if len(calls) == failing_call:
            raise OSError("simulated crash")
        return real_replace(src, dst)

    monkeypatch.setattr(os, "replace", flaky_replace)
    with pytest.raises(OSError):
        store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    assert len(store) == 0
    assert not store.is_locked()
    assert not any(name.endswith(".tmp") for name in os.listdir(store.objects_dir))

    new_id = store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    assert [e.id for e in store.list()] == [new_id]
    assert store.verify(new_id, key).status is TamperStatus.INTACT


def test_verify_detects_tampered_object(store, phantom, key):
    new_id = store.ingest(phantom, PHANTOM_ROI, RECORD, key)
    path = store.objects_dir / (new_id + ".pgm")
    save_pgm(path, brighten_patch(store.fetch(new_id), (40, 8, 16, 16), 64))
    assert store.verify(new_id, key).status is TamperStatus.TAMPERED
