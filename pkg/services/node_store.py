"""Content-addressed node store shared by every index."""

import logging
import struct
import threading
from pathlib import Path
from typing import Iterable, Optional, Union

from models.errors import CorruptionError, SnapshotError, UsageError
from models.node import NodeId, StoreStats, node_id_of

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"SIRI"
SNAPSHOT_VERSION = 1
_LENGTH = struct.Struct("<I")


class NodeStore:
    """Maps the SHA-256 digest of a node's bytes to those bytes.

    Putting identical bytes twice stores them once. Reads are lock-free;
    puts are serialized so the byte total stays consistent.
    """

    def __init__(self):
        self._nodes: dict[NodeId, bytes] = {}
        self._total_bytes = 0
        self._lock = threading.Lock()

    def put(self, node_bytes: bytes) -> NodeId:
        """Store ``node_bytes`` and return their digest."""
        if not node_bytes:
            raise UsageError("Cannot store an empty node")
        node_id = node_id_of(node_bytes)
        if node_id in self._nodes:
            return node_id
        with self._lock:
            if node_id not in self._nodes:
                self._nodes[node_id] = bytes(node_bytes)
                self._total_bytes += len(node_bytes)
        return node_id

    def get(self, node_id: NodeId) -> Optional[bytes]:
        """Return the stored bytes, or None when the digest is unknown."""
        return self._nodes.get(node_id)

    def require(self, node_id: NodeId) -> bytes:
        """Like ``get`` but a missing node is corruption."""
        data = self._nodes.get(node_id)
        if data is None:
            raise CorruptionError(f"Dangling node reference {node_id.hex()}")
        return data

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def stats(self) -> StoreStats:
        """Get the distinct node count and their total size."""
        return StoreStats(node_count=len(self._nodes), total_bytes=self._total_bytes)

    def snapshot(self, path: Union[str, Path]) -> None:
        """Write every node to ``path``.

        Layout: magic, version byte, then one ``u32 length + bytes`` record
        per node in insertion order. Ids are not stored; load recomputes them.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            fh.write(SNAPSHOT_MAGIC + bytes([SNAPSHOT_VERSION]))
            for data in list(self._nodes.values()):
                fh.write(_LENGTH.pack(len(data)))
                fh.write(data)
        log.debug("Wrote snapshot %s with %d nodes", path, len(self._nodes))

    @classmethod
    def load(cls, path: Union[str, Path], expected: Iterable[NodeId] = ()) -> "NodeStore":
        """Read a snapshot written by ``snapshot``.

        Every id in ``expected`` must be recomputed from some record; a
        missing one means a payload changed on disk.
        """
        raw = Path(path).read_bytes()
        header = len(SNAPSHOT_MAGIC) + 1
        if len(raw) < header or raw[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
            raise SnapshotError(f"Snapshot {path}: bad magic")
        if raw[len(SNAPSHOT_MAGIC)] != SNAPSHOT_VERSION:
            raise SnapshotError(
                f"Snapshot {path}: unsupported version {raw[len(SNAPSHOT_MAGIC)]}"
            )

        store = cls()
        pos = header
        while pos < len(raw):
            if pos + _LENGTH.size > len(raw):
                raise SnapshotError(f"Snapshot {path}: truncated record header at {pos}")
            (length,) = _LENGTH.unpack_from(raw, pos)
            pos += _LENGTH.size
            if length == 0 or pos + length > len(raw):
                raise SnapshotError(f"Snapshot {path}: truncated record at {pos}")
            store.put(raw[pos : pos + length])
            pos += length
        store.check_present(expected, path)
        log.debug("Loaded snapshot %s with %d nodes", path, len(store))
        return store

    def check_present(self, expected: Iterable[NodeId], source: object = "store") -> None:
        """Raise SnapshotError naming the first id in ``expected`` this store lacks."""
        for node_id in expected:
            if node_id not in self._nodes:
                raise SnapshotError(f"Snapshot {source}: digest mismatch, node {node_id.hex()} not found")
