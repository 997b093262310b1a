"""Merkle Bucket Tree: a fixed number of hashed buckets under a static m-ary tree.

The tree shape depends only on the bucket capacity and fanout, never on the
data; a record's bucket is a hash of its key.
"""

import bisect
import hashlib
import logging
from functools import lru_cache
from typing import Iterator, Optional

from models.errors import CorruptionError
from models.index import MbtMeta, StructureKind, Trace
from models.node import NodeId

from .codec import NodeReader, NodeWriter
from .index_api import Modified, PersistentIndex, Record, Step, merge_sorted_records

log = logging.getLogger(__name__)

TAG_INTERNAL = 0x10
TAG_BUCKET = 0x11


def bucket_of(key: bytes, meta: MbtMeta) -> int:
    """First eight digest bytes of the key, big-endian, modulo the bucket count."""
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") % meta.capacity


@lru_cache(maxsize=None)
def level_sizes(capacity: int, fanout: int) -> tuple[int, ...]:
    """Node count per level, buckets first, root last."""
    sizes = [capacity]
    while sizes[-1] > 1:
        sizes.append(-(-sizes[-1] // fanout))
    return tuple(sizes)


def depth_of(meta: MbtMeta) -> int:
    """Internal levels above the buckets."""
    return len(level_sizes(meta.capacity, meta.fanout)) - 1


def path_to(bucket: int, meta: MbtMeta) -> list[int]:
    """Child slot taken at each internal level, root first."""
    m = meta.fanout
    depth = depth_of(meta)
    return [(bucket // m ** (depth - 1 - d)) % m for d in range(depth)]


def mbt_node_counts(meta: MbtMeta) -> tuple[int, int]:
    """(internal nodes, total nodes) of the static tree; the total includes the buckets.

    For a power-of-fanout capacity the internal count is (B - 1) / (m - 1).
    """
    sizes = level_sizes(meta.capacity, meta.fanout)
    internal = sum(sizes[1:])
    return internal, internal + meta.capacity


def encode_bucket(records: list[Record], salt: int = 0) -> bytes:
    """Serialize a bucket holding ``records`` in key order."""
    writer = NodeWriter(TAG_BUCKET, salt).varint(len(records))
    for key, value in records:
        writer.blob(key).blob(value)
    return writer.finish()


def encode_internal(children: list[NodeId], salt: int = 0) -> bytes:
    """Serialize an internal node over its child digests."""
    writer = NodeWriter(TAG_INTERNAL, salt).varint(len(children))
    for child in children:
        writer.node_id(child)
    return writer.finish()


def decode_node(data: bytes) -> tuple[bool, list]:
    """Return (is_bucket, records or children)."""
    reader = NodeReader(data)
    tag = reader.expect_tag(TAG_INTERNAL, TAG_BUCKET)
    count = reader.varint()
    if tag == TAG_BUCKET:
        items = [(reader.blob(), reader.blob()) for _ in range(count)]
    else:
        items = [reader.node_id() for _ in range(count)]
    reader.expect_end()
    return tag == TAG_BUCKET, items


class MerkleBucketTree(PersistentIndex):
    kind = StructureKind.MBT
    meta_type = MbtMeta

    def __init__(self, store, meta: Optional[MbtMeta] = None):
        super().__init__(store, meta)
        self.depth = depth_of(self.meta)
        self._empty: Optional[NodeId] = None

    def _empty_root(self) -> NodeId:
        """Root of the tree whose buckets are all empty; identical nodes are stored once."""
        if self._empty is None:
            sizes = level_sizes(self.meta.capacity, self.meta.fanout)
            m = self.meta.fanout
            empty_bucket = self.store.put(encode_bucket([]))
            layer = [empty_bucket] * sizes[0]
            for size in sizes[1:]:
                built: dict[tuple[NodeId, ...], NodeId] = {}
                next_layer = []
                for j in range(size):
                    group = tuple(layer[j * m : (j + 1) * m])
                    if group not in built:
                        built[group] = self.store.put(encode_internal(list(group)))
                    next_layer.append(built[group])
                layer = next_layer
            self._empty = layer[0]
        return self._empty

    def _root(self, root: Optional[NodeId]) -> NodeId:
        return root if root is not None else self._empty_root()

    def _prepare(self, key: bytes) -> tuple[bytes, list[int]]:
        return key, path_to(bucket_of(key, self.meta), self.meta)

    def _step(self, node_bytes: bytes, prepared: tuple[bytes, list[int]], depth: int) -> Step:
        key, slots = prepared
        is_bucket, items = decode_node(node_bytes)
        if is_bucket:
            if depth != self.depth:
                raise CorruptionError("Bucket found above the bucket level")
            keys = [k for k, _ in items]
            i = bisect.bisect_left(keys, key)
            if i < len(keys) and keys[i] == key:
                return Step(value=items[i][1])
            return Step()
        if depth >= self.depth or slots[depth] >= len(items):
            raise CorruptionError("Internal node does not match the tree shape")
        return Step(child=items[slots[depth]], state=depth + 1)

    # -- writes -----------------------------------------------------------------

    def _insert(self, root: Optional[NodeId], key: bytes, value: bytes, trace: Trace) -> NodeId:
        return self._apply(self._root(root), {bucket_of(key, self.meta): [(key, value)]}, {}, trace)

    def _remove(self, root: Optional[NodeId], key: bytes, trace: Trace) -> NodeId:
        root = self._root(root)
        bucket = bucket_of(key, self.meta)
        if self._lookup_at(root, key) is None:
            return root
        return self._apply(root, {}, {bucket: [key]}, trace)

    def _lookup_at(self, root: NodeId, key: bytes) -> Optional[bytes]:
        node_id: Optional[NodeId] = root
        prepared = self._prepare(key)
        depth = 0
        while node_id is not None:
            step = self._step(self._load(node_id, None), prepared, depth)
            if step.child is None:
                return step.value
            node_id, depth = step.child, step.state
        return None

    def _put_batch(self, root: Optional[NodeId], records: list[Record], trace: Trace) -> NodeId:
        upserts: dict[int, list[Record]] = {}
        for key, value in records:
            upserts.setdefault(bucket_of(key, self.meta), []).append((key, value))
        log.debug("MBT batch of %d records touches %d buckets", len(records), len(upserts))
        return self._apply(self._root(root), upserts, {}, trace)

    def _apply(
        self,
        root: NodeId,
        upserts: dict[int, list[Record]],
        removals: dict[int, list[bytes]],
        trace: Trace,
    ) -> NodeId:
        """Rewrite every bucket named in the edits and each ancestor once."""
        touched = sorted(set(upserts) | set(removals))
        m = self.meta.fanout

        def rebuild(node_id: NodeId, depth: int, base: int, buckets: list[int]) -> NodeId:
            is_bucket, items = decode_node(self._load(node_id, trace))
            if depth == self.depth:
                merged = dict(items)
                for key in removals.get(base, ()):
                    merged.pop(key, None)
                for key, value in upserts.get(base, ()):
                    merged[key] = value
                return self._save(encode_bucket(sorted(merged.items())), trace)
            span = m ** (self.depth - depth - 1)
            children = list(items)
            by_slot: dict[int, list[int]] = {}
            for bucket in buckets:
                by_slot.setdefault((bucket - base) // span, []).append(bucket)
            for slot, group in by_slot.items():
                children[slot] = rebuild(children[slot], depth + 1, base + slot * span, group)
            return self._save(encode_internal(children), trace)

        return rebuild(root, 0, 0, touched)

    # -- reads ------------------------------------------------------------------

    def _iter_records(self, root: Optional[NodeId], trace: Optional[Trace]) -> Iterator[Record]:
        stack = [self._root(root)]
        while stack:
            is_bucket, items = decode_node(self._load(stack.pop(), trace))
            if is_bucket:
                yield from items
            else:
                stack.extend(reversed(items))

    def _diff(
        self, a: Optional[NodeId], b: Optional[NodeId], trace: Trace
    ) -> tuple[list[Record], list[Record], list[Modified]]:
        only_a: list[Record] = []
        only_b: list[Record] = []
        modified: list[Modified] = []

        def walk(x: NodeId, y: NodeId) -> None:
            if x == y:
                return
            x_bucket, x_items = decode_node(self._load(x, trace))
            y_bucket, y_items = decode_node(self._load(y, trace))
            if x_bucket != y_bucket or (not x_bucket and len(x_items) != len(y_items)):
                raise CorruptionError("Bucket trees of different shape")
            if x_bucket:
                oa, ob, mod = merge_sorted_records(x_items, y_items)
                only_a.extend(oa)
                only_b.extend(ob)
                modified.extend(mod)
                return
            for cx, cy in zip(x_items, y_items):
                walk(cx, cy)

        walk(self._root(a), self._root(b))
        return only_a, only_b, modified

    # -- structure --------------------------------------------------------------

    @classmethod
    def child_ids(cls, node_bytes: bytes) -> list[NodeId]:
        is_bucket, items = decode_node(node_bytes)
        return [] if is_bucket else list(items)

    def _reencode(self, node_bytes: bytes, children: dict[NodeId, NodeId], salt: int) -> bytes:
        is_bucket, items = decode_node(node_bytes)
        if is_bucket:
            return encode_bucket(items, salt)
        return encode_internal([children.get(c, c) for c in items], salt)

    def _validate(self, root: NodeId) -> None:
        sizes = level_sizes(self.meta.capacity, self.meta.fanout)
        layer = [root]
        for depth in range(self.depth + 1):
            expected = sizes[self.depth - depth]
            if len(layer) != expected:
                raise CorruptionError(
                    f"Level {depth} has {len(layer)} nodes, expected {expected}"
                )
            next_layer: list[NodeId] = []
            for bucket_index, node_id in enumerate(layer):
                is_bucket, items = decode_node(self._load(node_id, None))
                if is_bucket != (depth == self.depth):
                    raise CorruptionError(f"Unexpected node kind at level {depth}")
                if is_bucket:
                    for key, _ in items:
                        if bucket_of(key, self.meta) != bucket_index:
                            raise CorruptionError(f"Key {key!r} stored in the wrong bucket")
                else:
                    next_layer.extend(items)
            layer = next_layer
