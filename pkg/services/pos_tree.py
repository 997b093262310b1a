"""Pattern-Oriented-Split tree.

Leaves are cut where a rolling fingerprint over the serialized entries
matches a bit pattern; internal levels are cut where a child's digest
matches. Boundaries therefore depend only on content, so the same record
set always yields the same tree.

Writes re-chunk only the affected region of each level. Because the
rolling state restarts at every boundary, chunking from an old node start
reproduces the old layout once a cut lands on an old node end past the
last edit; the walk stops there and the change moves one level up.
"""

import bisect
import logging
from typing import Iterator, NamedTuple, Optional, Union

from models.errors import CorruptionError, UsageError
from models.index import Entry, PosMeta, RootHandle, StructureKind, Trace
from models.node import DIGEST_SIZE, NodeId

from .chunker import DigestChunker, EntryChunker
from .codec import NodeReader, NodeWriter, entry_bytes, varint_bytes
from .index_api import Modified, PersistentIndex, Record, Step, SubTree, ordered_diff

log = logging.getLogger(__name__)

TAG_INTERNAL = 0x20
TAG_LEAF = 0x21

# (key, value) in a leaf, (split key, child digest) in an internal node.
Item = tuple[bytes, Union[bytes, NodeId]]


class PosNode(NamedTuple):
    level: int
    items: list[Item]

    @property
    def split_key(self) -> bytes:
        return self.items[-1][0]


class Change(NamedTuple):
    """Replace the items with keys in [start, end] by ``items``."""

    start: bytes
    end: bytes
    items: list[Item]


def encode_node(level: int, items: list[Item], salt: int = 0) -> bytes:
    """Serialize a node: its level, then its items in key order."""
    if level == 0:
        writer = NodeWriter(TAG_LEAF, salt).varint(len(items))
        for key, value in items:
            writer.blob(key).blob(value)
        return writer.finish()
    writer = NodeWriter(TAG_INTERNAL, salt).varint(level).varint(len(items))
    for split, child in items:
        writer.blob(split).node_id(child)
    return writer.finish()


def decode_node(data: bytes) -> PosNode:
    reader = NodeReader(data)
    tag = reader.expect_tag(TAG_INTERNAL, TAG_LEAF)
    if tag == TAG_LEAF:
        count = reader.varint()
        items: list[Item] = [(reader.blob(), reader.blob()) for _ in range(count)]
        level = 0
    else:
        level = reader.varint()
        if level < 1:
            raise CorruptionError("Internal POS node at level 0")
        count = reader.varint()
        items = [(reader.blob(), reader.node_id()) for _ in range(count)]
    reader.expect_end()
    if not items:
        raise CorruptionError("Empty POS node")
    return PosNode(level, items)


class _LeafCutter:
    __slots__ = ("_chunker",)

    def __init__(self, meta: PosMeta):
        self._chunker = EntryChunker(meta.leaf)

    def feed(self, item: Item) -> bool:
        return self._chunker.feed(entry_bytes(item[0], item[1]))


class _InternalCutter:
    __slots__ = ("_chunker",)

    def __init__(self, meta: PosMeta):
        self._chunker = DigestChunker(meta.internal)

    def feed(self, item: Item) -> bool:
        split = item[0]
        size = len(varint_bytes(len(split))) + len(split) + DIGEST_SIZE
        return self._chunker.feed(item[1], size)


class _LevelCursor:
    """Walks the old tree's nodes at one level, left to right."""

    def __init__(self, tree: "PosTree", root_id: NodeId, root: PosNode, level: int, trace: Trace):
        self.tree = tree
        self.root_id = root_id
        self.root = root
        self.level = level
        self.trace = trace
        self.path: list[list] = []
        self.node = root
        self.node_id = root_id

    def _descend(self, node_id: NodeId) -> None:
        node = self.tree._node(node_id, self.trace)
        while node.level > self.level:
            self.path.append([node, 0])
            node_id = node.items[0][1]
            node = self.tree._node(node_id, self.trace)
        self.node, self.node_id = node, node_id

    def seek(self, key: bytes) -> None:
        """Position on the node whose key range holds ``key`` (the last node past the end)."""
        self.path = []
        node, node_id = self.root, self.root_id
        while node.level > self.level:
            keys = [split for split, _ in node.items]
            i = min(bisect.bisect_left(keys, key), len(keys) - 1)
            self.path.append([node, i])
            node_id = node.items[i][1]
            node = self.tree._node(node_id, self.trace)
        self.node, self.node_id = node, node_id

    def has_next(self) -> bool:
        return any(i < len(node.items) - 1 for node, i in self.path)

    def advance(self) -> bool:
        depth = len(self.path) - 1
        while depth >= 0 and self.path[depth][1] >= len(self.path[depth][0].items) - 1:
            depth -= 1
        if depth < 0:
            return False
        self.path[depth][1] += 1
        del self.path[depth + 1 :]
        parent, i = self.path[depth]
        self._descend(parent.items[i][1])
        return True


class PosTree(PersistentIndex):
    kind = StructureKind.POS
    meta_type = PosMeta

    def _node(self, node_id: NodeId, trace: Optional[Trace]) -> PosNode:
        return decode_node(self._load(node_id, trace))

    def _cutter(self, level: int):
        return _LeafCutter(self.meta) if level == 0 else _InternalCutter(self.meta)

    def _emit(self, level: int, group: list[Item], trace: Trace) -> Item:
        return group[-1][0], self._save(encode_node(level, group), trace)

    # -- bulk construction ----------------------------------------------------

    def _chunk_layer(self, level: int, items: list[Item], trace: Trace) -> list[Item]:
        cutter = self._cutter(level)
        out: list[Item] = []
        group: list[Item] = []
        for item in items:
            group.append(item)
            if cutter.feed(item):
                out.append(self._emit(level, group, trace))
                group = []
        if group:
            out.append(self._emit(level, group, trace))
        return out

    def _build(self, items: list[Item], level: int, trace: Trace) -> Optional[NodeId]:
        if not items:
            return None
        layer = self._chunk_layer(level, items, trace)
        level += 1
        while len(layer) > 1:
            layer = self._chunk_layer(level, layer, trace)
            level += 1
        return layer[0][1]

    def build(self, entries, trace: Optional[Trace] = None) -> RootHandle:
        """Bottom-up construction from records; keys must be sorted and unique."""
        records = [e if isinstance(e, tuple) else (e.key, e.value) for e in entries]
        for prev, cur in zip(records, records[1:]):
            if not prev[0] < cur[0]:
                raise UsageError(f"Records must be sorted and unique at {cur[0]!r}")
        root = self._build(records, 0, trace if trace is not None else Trace())
        return self.empty().with_root(root)

    # -- navigation -----------------------------------------------------------

    def _prepare(self, key: bytes) -> bytes:
        return key

    def _step(self, node_bytes: bytes, key: bytes, state: int) -> Step:
        node = decode_node(node_bytes)
        keys = [k for k, _ in node.items]
        i = bisect.bisect_left(keys, key)
        if node.level == 0:
            if i < len(keys) and keys[i] == key:
                return Step(value=node.items[i][1])
            return Step()
        if i == len(keys):
            return Step()
        return Step(child=node.items[i][1], state=node.level)

    # -- writes ---------------------------------------------------------------

    def _insert(self, root: Optional[NodeId], key: bytes, value: bytes, trace: Trace) -> NodeId:
        return self._apply(root, [(key, value)], trace)

    def _remove(self, root: Optional[NodeId], key: bytes, trace: Trace) -> Optional[NodeId]:
        return self._apply(root, [(key, None)], trace)

    def _put_batch(self, root: Optional[NodeId], records: list[Record], trace: Trace) -> Optional[NodeId]:
        return self._apply(root, records, trace)

    def _apply(
        self,
        root: Optional[NodeId],
        edits: list[tuple[bytes, Optional[bytes]]],
        trace: Trace,
    ) -> Optional[NodeId]:
        """Apply key-sorted upserts (value) and removals (None)."""
        if root is None:
            return self._build([(k, v) for k, v in edits if v is not None], 0, trace)
        root_node = self._node(root, trace)
        changes = [Change(k, k, [] if v is None else [(k, v)]) for k, v in edits]
        level = 0
        while level <= root_node.level:
            if level == 0 and self.meta.leaf.local_splits:
                changes = self._rechunk_local(root, root_node, changes, trace)
            else:
                changes = self._rechunk(root, root_node, level, changes, trace)
            if not changes:
                return root
            level += 1

        # A single region covering the old root: its replacement is the new top layer.
        layer = changes[0].items
        if not layer:
            return None
        while len(layer) > 1:
            layer = self._chunk_layer(level, layer, trace)
            level += 1
        return self._collapse(layer[0][1], trace)

    def _collapse(self, node_id: NodeId, trace: Trace) -> NodeId:
        node = self._node(node_id, trace)
        while node.level > 0 and len(node.items) == 1:
            node_id = node.items[0][1]
            node = self._node(node_id, trace)
        return node_id

    def _rechunk(
        self,
        root: NodeId,
        root_node: PosNode,
        level: int,
        changes: list[Change],
        trace: Trace,
    ) -> list[Change]:
        """Re-chunk the nodes at ``level`` touched by ``changes``.

        Returns the replacements for the parent level's items.
        """
        out: list[Change] = []
        cursor = _LevelCursor(self, root, root_node, level, trace)
        ci = 0
        total = len(changes)
        while ci < total:
            cursor.seek(changes[ci].start)
            cutter = self._cutter(level)
            old_items: list[Item] = []
            new_items: list[Item] = []
            group: list[Item] = []
            emitted = False

            def feed(item: Item) -> bool:
                group.append(item)
                if cutter.feed(item):
                    new_items.append(self._emit(level, group, trace))
                    group.clear()
                    return True
                return False

            while True:
                node = cursor.node
                old_items.append((node.split_key, cursor.node_id))
                synced = False
                last = len(node.items) - 1
                for idx, item in enumerate(node.items):
                    key = item[0]
                    deleted = False
                    while ci < total and changes[ci].start <= key:
                        change = changes[ci]
                        if not emitted:
                            for new in change.items:
                                feed(new)
                            emitted = True
                        if key <= change.end:
                            deleted = True
                            break
                        ci += 1
                        emitted = False
                    if deleted:
                        synced = False
                        continue
                    synced = feed(item) and idx == last
                while ci < total and emitted and changes[ci].end <= node.split_key:
                    ci += 1
                    emitted = False

                pending = ci < total and emitted
                has_next = cursor.has_next()
                if synced and not pending and (ci == total or has_next):
                    break
                if has_next and (pending or not synced):
                    cursor.advance()
                    continue
                # End of the level: whatever is left sorts after every old item.
                for change in changes[ci:]:
                    if not emitted:
                        for new in change.items:
                            feed(new)
                    emitted = False
                ci = total
                if group:
                    new_items.append(self._emit(level, list(group), trace))
                    group.clear()
                break

            if new_items != old_items:
                out.append(Change(old_items[0][0], old_items[-1][0], new_items))
        log.debug("POS level %d: %d changed regions", level, len(out))
        return out

    def _rechunk_local(
        self, root: NodeId, root_node: PosNode, changes: list[Change], trace: Trace
    ) -> list[Change]:
        """Leaf edits confined to their own leaf; oversized leaves split in halves."""
        out: list[Change] = []
        cursor = _LevelCursor(self, root, root_node, 0, trace)
        forced = self.meta.leaf.forced_split_bytes
        limit = self.meta.leaf.max_chunk_bytes
        ci = 0
        while ci < len(changes):
            cursor.seek(changes[ci].start)
            node = cursor.node
            merged = dict(node.items)
            tail = not cursor.has_next()
            while ci < len(changes) and (tail or changes[ci].start <= node.split_key):
                change = changes[ci]
                merged.pop(change.start, None)
                merged.update(change.items)
                ci += 1
            records = sorted(merged.items())
            new_items: list[Item] = []
            if sum(len(entry_bytes(k, v)) for k, v in records) <= limit:
                if records:
                    new_items.append(self._emit(0, records, trace))
            else:
                group: list[Item] = []
                size = 0
                for record in records:
                    group.append(record)
                    size += len(entry_bytes(*record))
                    if size >= forced:
                        new_items.append(self._emit(0, group, trace))
                        group, size = [], 0
                if group:
                    new_items.append(self._emit(0, group, trace))
            old = [(node.split_key, cursor.node_id)]
            if new_items != old:
                out.append(Change(node.split_key, node.split_key, new_items))
        return out

    # -- reads ----------------------------------------------------------------

    def _iter_records(self, root: Optional[NodeId], trace: Optional[Trace]) -> Iterator[Record]:
        if root is None:
            return
        stack = [root]
        while stack:
            node = self._node(stack.pop(), trace)
            if node.level == 0:
                yield from node.items
            else:
                stack.extend(child for _, child in reversed(node.items))

    def _diff(
        self, a: Optional[NodeId], b: Optional[NodeId], trace: Trace
    ) -> tuple[list[Record], list[Record], list[Modified]]:
        cache: dict[NodeId, PosNode] = {}

        def node(node_id: NodeId) -> PosNode:
            if node_id not in cache:
                cache[node_id] = self._node(node_id, trace)
            return cache[node_id]

        def expand(sub: SubTree) -> list:
            current = node(sub.node_id)
            if current.level == 0:
                return list(current.items)
            return [SubTree(child, current.level - 1, split) for split, child in current.items]

        def top(root: Optional[NodeId]) -> Optional[SubTree]:
            return None if root is None else SubTree(root, node(root).level, None)

        return ordered_diff(top(a), top(b), expand)

    # -- structure ------------------------------------------------------------

    @classmethod
    def child_ids(cls, node_bytes: bytes) -> list[NodeId]:
        node = decode_node(node_bytes)
        return [] if node.level == 0 else [child for _, child in node.items]

    def _reencode(self, node_bytes: bytes, children: dict[NodeId, NodeId], salt: int) -> bytes:
        node = decode_node(node_bytes)
        items = node.items
        if node.level > 0:
            items = [(split, children.get(child, child)) for split, child in items]
        return encode_node(node.level, items, salt)

    def _validate(self, root: NodeId) -> None:
        root_node = self._node(root, None)
        if root_node.level > 0 and len(root_node.items) < 2:
            raise CorruptionError("POS root has a single child")
        previous: Optional[bytes] = None

        def check(node_id: NodeId, level: int) -> bytes:
            nonlocal previous
            node = self._node(node_id, None)
            if node.level != level:
                raise CorruptionError(f"Node at level {node.level}, expected {level}")
            if level == 0:
                for key, _ in node.items:
                    if previous is not None and key <= previous:
                        raise CorruptionError(f"Keys out of order at {key!r}")
                    previous = key
                return node.split_key
            for split, child in node.items:
                if check(child, level - 1) != split:
                    raise CorruptionError(f"Split key {split!r} is not its subtree's maximum")
            return node.split_key

        check(root, root_node.level)


def pos_build(tree: PosTree, entries: list[Entry]) -> RootHandle:
    """Canonical tree for ``entries`` built from scratch."""
    return tree.build(sorted((e.key, e.value) for e in entries))
