import struct

import pytest

from models.errors import CorruptionError, SnapshotError, UsageError
from models.node import NodeId, node_id_of
from services.node_store import NodeStore


def test_put_is_content_addressed(store):
    a = store.put(b"hello")
    assert a == node_id_of(b"hello")
    assert store.put(b"hello") == a
    assert store.get(a) == b"hello"
    assert len(store) == 1
    assert store.stats().total_bytes == 5


def test_put_empty_rejected(store):
    with pytest.raises(UsageError):
        store.put(b"")


def test_missing_node(store):
    missing = NodeId(b"\x00" * 32)
    assert store.get(missing) is None
    assert missing not in store
    with pytest.raises(CorruptionError):
        store.require(missing)


def test_snapshot_round_trip(store, tmp_path):
    ids = [store.put(b"node-%d" % i * (i + 1)) for i in range(50)]
    path = tmp_path / "nodes.siri"
    store.snapshot(path)

    loaded = NodeStore.load(path)
    assert loaded.stats() == store.stats()
    assert all(loaded.get(i) == store.get(i) for i in ids)


def test_empty_snapshot_round_trip(store, tmp_path):
    path = tmp_path / "empty.siri"
    store.snapshot(path)
    assert len(NodeStore.load(path)) == 0


PAYLOADS = [b"payload %d" % i for i in range(10)]


@pytest.fixture
def snapshot(store, tmp_path):
    for payload in PAYLOADS:
        store.put(payload)
    path = tmp_path / "nodes.siri"
    store.snapshot(path)
    return path


def test_snapshot_layout(snapshot):
    expected = b"SIRI\x01" + b"".join(struct.pack("<I", len(p)) + p for p in PAYLOADS)
    assert snapshot.read_bytes() == expected


def test_load_minimal_file(tmp_path):
    path = tmp_path / "one.siri"
    path.write_bytes(b"SIRI\x01" + struct.pack("<I", 3) + b"abc")
    loaded = NodeStore.load(path)
    assert loaded.get(node_id_of(b"abc")) == b"abc"
    assert loaded.stats().to_dict() == {"node_count": 1, "total_bytes": 3}


def test_flipped_byte_detected(snapshot):
    raw = bytearray(snapshot.read_bytes())
    raw[12] ^= 0x01
    snapshot.write_bytes(bytes(raw))
    # The record still parses, but its recomputed id is no longer the one expected.
    assert len(NodeStore.load(snapshot)) == len(PAYLOADS)
    with pytest.raises(SnapshotError, match="digest mismatch"):
        NodeStore.load(snapshot, expected=[node_id_of(p) for p in PAYLOADS])


def test_truncated_snapshot_detected(snapshot):
    snapshot.write_bytes(snapshot.read_bytes()[:-5])
    with pytest.raises(SnapshotError, match="truncated"):
        NodeStore.load(snapshot)


def test_bad_magic_detected(snapshot):
    snapshot.write_bytes(b"NOPE" + snapshot.read_bytes()[4:])
    with pytest.raises(SnapshotError, match="bad magic"):
        NodeStore.load(snapshot)


def test_unknown_version_rejected(snapshot):
    snapshot.write_bytes(b"SIRI\x02" + snapshot.read_bytes()[5:])
    with pytest.raises(SnapshotError, match="unsupported version"):
        NodeStore.load(snapshot)


def test_node_id_is_sha256(store):
    node_id = store.put(b"abc")
    assert node_id.hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
