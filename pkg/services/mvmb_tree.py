"""Multi-version Merkle B+-tree: a copy-on-write B+-tree with digest pointers.

Node boundaries come from classic split/borrow/merge rules, so the shape
depends on the order in which records arrived.
"""

import bisect
import logging
from typing import Iterator, NamedTuple, Optional

from models.errors import CorruptionError
from models.index import MvmbMeta, StructureKind, Trace
from models.node import NodeId

from .codec import NodeReader, NodeWriter
from .index_api import Modified, PersistentIndex, Record, Step, SubTree, ordered_diff

log = logging.getLogger(__name__)

TAG_INTERNAL = 0x30
TAG_LEAF = 0x31


class BNode(NamedTuple):
    """A leaf (level 0, ``records``) or an internal node (``keys`` separate ``children``)."""

    level: int
    records: list[Record]
    keys: list[bytes]
    children: list[NodeId]

    @property
    def is_leaf(self) -> bool:
        return self.level == 0

    def size(self) -> int:
        return len(self.records) if self.is_leaf else len(self.children)


def leaf(records: list[Record]) -> BNode:
    return BNode(0, records, [], [])


def internal(level: int, keys: list[bytes], children: list[NodeId]) -> BNode:
    return BNode(level, [], keys, children)


def encode_node(node: BNode, salt: int = 0) -> bytes:
    """Serialize a leaf or internal node."""
    if node.is_leaf:
        writer = NodeWriter(TAG_LEAF, salt).varint(len(node.records))
        for key, value in node.records:
            writer.blob(key).blob(value)
        return writer.finish()
    writer = NodeWriter(TAG_INTERNAL, salt).varint(node.level).varint(len(node.children))
    for child in node.children:
        writer.node_id(child)
    for key in node.keys:
        writer.blob(key)
    return writer.finish()


def decode_node(data: bytes) -> BNode:
    reader = NodeReader(data)
    tag = reader.expect_tag(TAG_INTERNAL, TAG_LEAF)
    if tag == TAG_LEAF:
        count = reader.varint()
        node = leaf([(reader.blob(), reader.blob()) for _ in range(count)])
    else:
        level = reader.varint()
        count = reader.varint()
        if level < 1 or count < 1:
            raise CorruptionError("Malformed internal B+-tree node")
        children = [reader.node_id() for _ in range(count)]
        keys = [reader.blob() for _ in range(count - 1)]
        node = internal(level, keys, children)
    reader.expect_end()
    return node


class MvmbTree(PersistentIndex):
    kind = StructureKind.MVMB
    meta_type = MvmbMeta

    def _node(self, node_id: NodeId, trace: Optional[Trace]) -> BNode:
        return decode_node(self._load(node_id, trace))

    def _put(self, node: BNode, trace: Trace) -> NodeId:
        return self._save(encode_node(node), trace)

    def _prepare(self, key: bytes) -> bytes:
        return key

    def _step(self, node_bytes: bytes, key: bytes, state: int) -> Step:
        node = decode_node(node_bytes)
        if node.is_leaf:
            keys = [k for k, _ in node.records]
            i = bisect.bisect_left(keys, key)
            if i < len(keys) and keys[i] == key:
                return Step(value=node.records[i][1])
            return Step()
        return Step(child=node.children[bisect.bisect_right(node.keys, key)], state=node.level)

    # -- insert -----------------------------------------------------------------

    def _insert(self, root: Optional[NodeId], key: bytes, value: bytes, trace: Trace) -> NodeId:
        if root is None:
            return self._put(leaf([(key, value)]), trace)
        new_id, split = self._insert_at(root, key, value, trace)
        if split is None:
            return new_id
        separator, right = split
        level = self._node(new_id, None).level + 1
        return self._put(internal(level, [separator], [new_id, right]), trace)

    def _insert_at(
        self, node_id: NodeId, key: bytes, value: bytes, trace: Trace
    ) -> tuple[NodeId, Optional[tuple[bytes, NodeId]]]:
        """Insert below ``node_id``; returns the new node and an optional (separator, right sibling)."""
        node = self._node(node_id, trace)
        if node.is_leaf:
            records = list(node.records)
            keys = [k for k, _ in records]
            i = bisect.bisect_left(keys, key)
            if i < len(keys) and keys[i] == key:
                if records[i][1] == value:
                    return node_id, None
                records[i] = (key, value)
            else:
                records.insert(i, (key, value))
            if len(records) <= self.meta.max_entries:
                return self._put(leaf(records), trace), None
            mid = (len(records) + 1) // 2
            right = self._put(leaf(records[mid:]), trace)
            return self._put(leaf(records[:mid]), trace), (records[mid][0], right)

        i = bisect.bisect_right(node.keys, key)
        child, split = self._insert_at(node.children[i], key, value, trace)
        if child == node.children[i] and split is None:
            return node_id, None
        keys = list(node.keys)
        children = list(node.children)
        children[i] = child
        if split is not None:
            keys.insert(i, split[0])
            children.insert(i + 1, split[1])
        if len(children) <= self.meta.max_children:
            return self._put(internal(node.level, keys, children), trace), None
        mid = (len(children) + 1) // 2
        right = self._put(internal(node.level, keys[mid:], children[mid:]), trace)
        left = self._put(internal(node.level, keys[: mid - 1], children[:mid]), trace)
        return left, (keys[mid - 1], right)

    # -- remove -----------------------------------------------------------------

    def _remove(self, root: Optional[NodeId], key: bytes, trace: Trace) -> Optional[NodeId]:
        if root is None:
            return None
        node = self._remove_at(root, key, trace)
        if node is None:
            return root
        if node.is_leaf and not node.records:
            return None
        if not node.is_leaf and len(node.children) == 1:
            return node.children[0]
        return self._put(node, trace)

    def _remove_at(self, node_id: NodeId, key: bytes, trace: Trace) -> Optional[BNode]:
        """Remove below ``node_id``; returns the rewritten (unsaved) node, or None if absent."""
        node = self._node(node_id, trace)
        if node.is_leaf:
            keys = [k for k, _ in node.records]
            i = bisect.bisect_left(keys, key)
            if i == len(keys) or keys[i] != key:
                return None
            return leaf(node.records[:i] + node.records[i + 1 :])

        i = bisect.bisect_right(node.keys, key)
        child = self._remove_at(node.children[i], key, trace)
        if child is None:
            return None
        keys = list(node.keys)
        children = list(node.children)
        minimum = self.meta.min_entries if child.is_leaf else self.meta.min_children
        if child.size() >= minimum:
            children[i] = self._put(child, trace)
        else:
            self._rebalance(keys, children, i, child, trace)
        return internal(node.level, keys, children)

    def _rebalance(
        self, keys: list[bytes], children: list[NodeId], i: int, child: BNode, trace: Trace
    ) -> None:
        """Fix an underfull child at slot ``i`` by borrowing from or merging with a sibling."""
        minimum = self.meta.min_entries if child.is_leaf else self.meta.min_children
        if i > 0:
            sibling = self._node(children[i - 1], trace)
            if sibling.size() > minimum:
                if child.is_leaf:
                    moved = sibling.records[-1]
                    child = leaf([moved] + child.records)
                    sibling = leaf(sibling.records[:-1])
                    keys[i - 1] = moved[0]
                else:
                    child = internal(
                        child.level,
                        [keys[i - 1]] + child.keys,
                        [sibling.children[-1]] + child.children,
                    )
                    keys[i - 1] = sibling.keys[-1]
                    sibling = internal(sibling.level, sibling.keys[:-1], sibling.children[:-1])
                children[i - 1] = self._put(sibling, trace)
                children[i] = self._put(child, trace)
                return
            merged = self._join(sibling, child, keys[i - 1])
            children[i - 1] = self._put(merged, trace)
            del children[i]
            del keys[i - 1]
            return

        sibling = self._node(children[i + 1], trace)
        if sibling.size() > minimum:
            if child.is_leaf:
                moved = sibling.records[0]
                child = leaf(child.records + [moved])
                sibling = leaf(sibling.records[1:])
                keys[i] = sibling.records[0][0]
            else:
                child = internal(
                    child.level,
                    child.keys + [keys[i]],
                    child.children + [sibling.children[0]],
                )
                keys[i] = sibling.keys[0]
                sibling = internal(sibling.level, sibling.keys[1:], sibling.children[1:])
            children[i] = self._put(child, trace)
            children[i + 1] = self._put(sibling, trace)
            return
        merged = self._join(child, sibling, keys[i])
        children[i] = self._put(merged, trace)
        del children[i + 1]
        del keys[i]

    @staticmethod
    def _join(left: BNode, right: BNode, separator: bytes) -> BNode:
        if left.is_leaf:
            return leaf(left.records + right.records)
        return internal(left.level, left.keys + [separator] + right.keys, left.children + right.children)

    # -- reads ------------------------------------------------------------------

    def _iter_records(self, root: Optional[NodeId], trace: Optional[Trace]) -> Iterator[Record]:
        if root is None:
            return
        stack = [root]
        while stack:
            node = self._node(stack.pop(), trace)
            if node.is_leaf:
                yield from node.records
            else:
                stack.extend(reversed(node.children))

    def _diff(
        self, a: Optional[NodeId], b: Optional[NodeId], trace: Trace
    ) -> tuple[list[Record], list[Record], list[Modified]]:
        cache: dict[NodeId, BNode] = {}

        def node(node_id: NodeId) -> BNode:
            if node_id not in cache:
                cache[node_id] = self._node(node_id, trace)
            return cache[node_id]

        def expand(sub: SubTree) -> list:
            current = node(sub.node_id)
            if current.is_leaf:
                return list(current.records)
            bounds = current.keys + [sub.hi]
            return [
                SubTree(child, current.level - 1, bounds[j])
                for j, child in enumerate(current.children)
            ]

        def top(root: Optional[NodeId]) -> Optional[SubTree]:
            return None if root is None else SubTree(root, node(root).level, None)

        return ordered_diff(top(a), top(b), expand)

    # -- structure --------------------------------------------------------------

    @classmethod
    def child_ids(cls, node_bytes: bytes) -> list[NodeId]:
        return list(decode_node(node_bytes).children)

    def _reencode(self, node_bytes: bytes, children: dict[NodeId, NodeId], salt: int) -> bytes:
        node = decode_node(node_bytes)
        if not node.is_leaf:
            node = node._replace(children=[children.get(c, c) for c in node.children])
        return encode_node(node, salt)

    def _validate(self, root: NodeId) -> None:
        meta = self.meta
        leaf_depths: set[int] = set()

        def check(node_id: NodeId, lo: Optional[bytes], hi: Optional[bytes], depth: int, is_root: bool) -> None:
            node = self._node(node_id, None)
            if node.is_leaf:
                keys = [k for k, _ in node.records]
                if not is_root and not meta.min_entries <= len(keys) <= meta.max_entries:
                    raise CorruptionError(f"Leaf holds {len(keys)} entries")
                if keys != sorted(set(keys)):
                    raise CorruptionError("Leaf keys out of order")
                if keys and ((lo is not None and keys[0] < lo) or (hi is not None and keys[-1] >= hi)):
                    raise CorruptionError("Leaf keys outside separator range")
                leaf_depths.add(depth)
                return
            count = len(node.children)
            if count > meta.max_children or (count < meta.min_children and not is_root) or count < 2:
                raise CorruptionError(f"Internal node has {count} children")
            if node.keys != sorted(node.keys):
                raise CorruptionError("Separators out of order")
            bounds = [lo] + node.keys + [hi]
            for j, child in enumerate(node.children):
                if self._node(child, None).level != node.level - 1:
                    raise CorruptionError("Child level mismatch")
                check(child, bounds[j], bounds[j + 1], depth + 1, False)

        check(root, None, None, 0, True)
        if len(leaf_depths) > 1:
            raise CorruptionError(f"Leaves at depths {sorted(leaf_depths)}")
