"""Merkle Patricia Trie over nibble paths.

Three node kinds: a branch with sixteen child slots and an optional value,
a leaf holding the remaining path and the value, and an extension holding a
shared path segment above a branch. The shape is canonical: a branch keeps
at least two occupied slots, or one slot and a value, and an extension
always points at a branch.
"""

import logging
from typing import Iterator, NamedTuple, Optional, Union

from models.errors import CorruptionError
from models.index import MptMeta, StructureKind, Trace
from models.node import NodeId

from .codec import NodeReader, NodeWriter
from .index_api import Modified, PersistentIndex, Record, Step, merge_sorted_records

log = logging.getLogger(__name__)

TAG_BRANCH = 0x00
TAG_LEAF = 0x01
TAG_EXTENSION = 0x02



class Branch(NamedTuple):
    children: tuple[Optional[NodeId], ...]
    value: Optional[bytes]


class Leaf(NamedTuple):
    path: bytes
    value: bytes


class Extension(NamedTuple):
    path: bytes
    child: NodeId


TrieNode = Union[Branch, Leaf, Extension]


def nibbles(key: bytes) -> bytes:
    """Key as a sequence of 4-bit values, high nibble first."""
    out = bytearray(2 * len(key))
    for i, b in enumerate(key):
        out[2 * i] = b >> 4
        out[2 * i + 1] = b & 0x0F
    return bytes(out)


def nibbles_to_key(path: bytes) -> bytes:
    if len(path) % 2:
        raise CorruptionError(f"Odd nibble path of length {len(path)} holds a value")
    return bytes(16 * path[i] + path[i + 1] for i in range(0, len(path), 2))


def hp_encode(path: bytes, is_leaf: bool) -> bytes:
    """Hex-prefix encoding: flag nibble (2 * leaf + odd parity), then the nibbles packed."""
    flag = 2 * int(is_leaf)
    encoded = bytearray()
    if len(path) % 2 == 0:
        encoded.append(16 * flag)
        start = 0
    else:
        encoded.append(16 * (flag + 1) + path[0])
        start = 1
    for i in range(start, len(path), 2):
        encoded.append(16 * path[i] + path[i + 1])
    return bytes(encoded)


def hp_decode(data: bytes) -> tuple[bytes, bool]:
    """Inverse of ``hp_encode``: the nibble path and its leaf flag."""
    if not data:
        raise CorruptionError("Empty hex-prefix path")
    flag = data[0] >> 4
    if flag > 3:
        raise CorruptionError(f"Bad hex-prefix flag {flag}")
    out = bytearray()
    if flag & 1:
        out.append(data[0] & 0x0F)
    elif data[0] & 0x0F:
        raise CorruptionError("Non-zero padding in even hex-prefix path")
    for b in data[1:]:
        out.append(b >> 4)
        out.append(b & 0x0F)
    return bytes(out), bool(flag & 2)


def encode_node(node: TrieNode, salt: int = 0) -> bytes:
    """Tag byte, then the node's fields."""
    if isinstance(node, Branch):
        writer = NodeWriter(TAG_BRANCH, salt)
        bitmap = 0
        for i, child in enumerate(node.children):
            if child is not None:
                bitmap |= 1 << i
        writer.raw(bitmap.to_bytes(2, "big"))
        for child in node.children:
            if child is not None:
                writer.byte(0).node_id(child)
        if node.value is None:
            writer.byte(0)
        else:
            writer.byte(1).blob(node.value)
        return writer.finish()
    if isinstance(node, Leaf):
        return NodeWriter(TAG_LEAF, salt).blob(hp_encode(node.path, True)).blob(node.value).finish()
    return (
        NodeWriter(TAG_EXTENSION, salt)
        .blob(hp_encode(node.path, False))
        .node_id(node.child)
        .finish()
    )


def decode_node(data: bytes) -> TrieNode:
    """Parse a node produced by ``encode_node``."""
    reader = NodeReader(data)
    tag = reader.expect_tag(TAG_BRANCH, TAG_LEAF, TAG_EXTENSION)
    if tag == TAG_BRANCH:
        bitmap = int.from_bytes(reader.raw(2), "big")
        children: list[Optional[NodeId]] = [None] * 16
        for i in range(16):
            if bitmap >> i & 1:
                if reader.byte() != 0:
                    raise CorruptionError("Inline branch slots are not supported")
                children[i] = reader.node_id()
        value = reader.optional_blob()
        reader.expect_end()
        return Branch(tuple(children), value)
    path, is_leaf = hp_decode(reader.blob())
    if tag == TAG_LEAF:
        if not is_leaf:
            raise CorruptionError("Leaf node with extension path flag")
        node: TrieNode = Leaf(path, reader.blob())
    else:
        if is_leaf or not path:
            raise CorruptionError("Malformed extension path")
        node = Extension(path, reader.node_id())
    reader.expect_end()
    return node


def _common_prefix(a: bytes, b: bytes) -> int:
    n = min(len(a), len(b))
    i = 0
    while i < n and a[i] == b[i]:
        i += 1
    return i


# A position inside the trie: a node and how many of its path nibbles are consumed.
Position = tuple[NodeId, int]


class MerklePatriciaTrie(PersistentIndex):
    kind = StructureKind.MPT
    meta_type = MptMeta

    def _node(self, node_id: NodeId, trace: Optional[Trace]) -> TrieNode:
        return decode_node(self._load(node_id, trace))

    def _put(self, node: TrieNode, trace: Trace) -> NodeId:
        return self._save(encode_node(node), trace)

    def _prepare(self, key: bytes) -> bytes:
        return nibbles(key)

    def _step(self, node_bytes: bytes, path: bytes, offset: int) -> Step:
        node = decode_node(node_bytes)
        if isinstance(node, Branch):
            if offset == len(path):
                return Step(value=node.value)
            child = node.children[path[offset]]
            return Step() if child is None else Step(child=child, state=offset + 1)
        if isinstance(node, Leaf):
            return Step(value=node.value if path[offset:] == node.path else None)
        end = offset + len(node.path)
        if path[offset:end] == node.path:
            return Step(child=node.child, state=end)
        return Step()

    # -- insert ---------------------------------------------------------------

    def _insert(self, root: Optional[NodeId], key: bytes, value: bytes, trace: Trace) -> NodeId:
        return self._insert_at(root, nibbles(key), value, trace)

    def _insert_at(
        self, node_id: Optional[NodeId], path: bytes, value: bytes, trace: Trace
    ) -> NodeId:
        if node_id is None:
            return self._put(Leaf(path, value), trace)
        node = self._node(node_id, trace)

        if isinstance(node, Branch):
            if not path:
                if node.value == value:
                    return node_id
                return self._put(node._replace(value=value), trace)
            slot = path[0]
            child = self._insert_at(node.children[slot], path[1:], value, trace)
            if child == node.children[slot]:
                return node_id
            children = list(node.children)
            children[slot] = child
            return self._put(Branch(tuple(children), node.value), trace)

        shared = _common_prefix(node.path, path)
        if isinstance(node, Leaf) and shared == len(node.path) == len(path):
            if node.value == value:
                return node_id
            return self._put(Leaf(path, value), trace)
        if isinstance(node, Extension) and shared == len(node.path):
            child = self._insert_at(node.child, path[shared:], value, trace)
            if child == node.child:
                return node_id
            return self._put(Extension(node.path, child), trace)

        # The paths diverge inside this node: split it around a new branch.
        children: list[Optional[NodeId]] = [None] * 16
        branch_value: Optional[bytes] = None
        old_rest = node.path[shared:]
        if isinstance(node, Leaf):
            if old_rest:
                children[old_rest[0]] = self._put(Leaf(old_rest[1:], node.value), trace)
            else:
                branch_value = node.value
        elif len(old_rest) > 1:
            children[old_rest[0]] = self._put(Extension(old_rest[1:], node.child), trace)
        else:
            children[old_rest[0]] = node.child
        new_rest = path[shared:]
        if new_rest:
            children[new_rest[0]] = self._put(Leaf(new_rest[1:], value), trace)
        else:
            branch_value = value
        branch = self._put(Branch(tuple(children), branch_value), trace)
        if shared:
            return self._put(Extension(path[:shared], branch), trace)
        return branch

    # -- remove ---------------------------------------------------------------

    def _remove(self, root: Optional[NodeId], key: bytes, trace: Trace) -> Optional[NodeId]:
        return self._remove_at(root, nibbles(key), trace)

    def _remove_at(
        self, node_id: Optional[NodeId], path: bytes, trace: Trace
    ) -> Optional[NodeId]:
        if node_id is None:
            return None
        node = self._node(node_id, trace)
        if isinstance(node, Leaf):
            return None if node.path == path else node_id
        if isinstance(node, Extension):
            n = len(node.path)
            if path[:n] != node.path:
                return node_id
            child = self._remove_at(node.child, path[n:], trace)
            if child == node.child:
                return node_id
            if child is None:
                return None
            return self._prefixed(node.path, child, trace)

        if not path:
            if node.value is None:
                return node_id
            children, value = list(node.children), None
        else:
            slot = path[0]
            old = node.children[slot]
            new = self._remove_at(old, path[1:], trace)
            if new == old:
                return node_id
            children = list(node.children)
            children[slot] = new
            value = node.value
        return self._normalize_branch(children, value, trace)

    def _normalize_branch(
        self, children: list[Optional[NodeId]], value: Optional[bytes], trace: Trace
    ) -> Optional[NodeId]:
        occupied = [i for i, c in enumerate(children) if c is not None]
        if len(occupied) >= 2 or (occupied and value is not None):
            return self._put(Branch(tuple(children), value), trace)
        if not occupied:
            return None if value is None else self._put(Leaf(b"", value), trace)
        slot = occupied[0]
        return self._prefixed(bytes([slot]), children[slot], trace)

    def _prefixed(self, prefix: bytes, child_id: NodeId, trace: Trace) -> NodeId:
        """Node equivalent to ``child_id`` hung below ``prefix``, merging paths."""
        child = self._node(child_id, trace)
        if isinstance(child, Leaf):
            return self._put(Leaf(prefix + child.path, child.value), trace)
        if isinstance(child, Extension):
            return self._put(Extension(prefix + child.path, child.child), trace)
        return self._put(Extension(prefix, child_id), trace)

    # -- traversal ------------------------------------------------------------

    def _walk(
        self, node_id: NodeId, offset: int, prefix: bytes, trace: Optional[Trace]
    ) -> Iterator[tuple[bytes, bytes]]:
        """Yield (nibble path, value) under a position in key order."""
        stack: list[tuple[NodeId, int, bytes]] = [(node_id, offset, prefix)]
        while stack:
            nid, off, pre = stack.pop()
            node = self._node(nid, trace)
            if isinstance(node, Leaf):
                yield pre + node.path[off:], node.value
            elif isinstance(node, Extension):
                stack.append((node.child, 0, pre + node.path[off:]))
            else:
                if node.value is not None:
                    yield pre, node.value
                for i in range(15, -1, -1):
                    child = node.children[i]
                    if child is not None:
                        stack.append((child, 0, pre + bytes([i])))

    def _iter_records(self, root: Optional[NodeId], trace: Optional[Trace]) -> Iterator[Record]:
        if root is None:
            return
        for path, value in self._walk(root, 0, b"", trace):
            yield nibbles_to_key(path), value

    # -- diff -----------------------------------------------------------------

    def _diff(
        self, a: Optional[NodeId], b: Optional[NodeId], trace: Trace
    ) -> tuple[list[Record], list[Record], list[Modified]]:
        cache: dict[NodeId, TrieNode] = {}
        only_a: list[Record] = []
        only_b: list[Record] = []
        modified: list[Modified] = []

        def node(node_id: NodeId) -> TrieNode:
            if node_id not in cache:
                cache[node_id] = self._node(node_id, trace)
            return cache[node_id]

        def advance(pos: Position, n: int) -> Position:
            nid, off = pos
            current = node(nid)
            if isinstance(current, Extension) and off + n == len(current.path):
                return current.child, 0
            return nid, off + n

        def records(pos: Position, prefix: bytes) -> list[tuple[bytes, bytes]]:
            return list(self._walk(pos[0], pos[1], prefix, trace))

        def view(pos: Position) -> tuple[Optional[bytes], dict[int, Position]]:
            nid, off = pos
            current = node(nid)
            if isinstance(current, Branch):
                return current.value, {
                    i: (c, 0) for i, c in enumerate(current.children) if c is not None
                }
            # Extension part-way along its path.
            return None, {current.path[off]: advance(pos, 1)}

        def emit(only_a_recs, only_b_recs, mod_recs) -> None:
            only_a.extend((nibbles_to_key(p), v) for p, v in only_a_recs)
            only_b.extend((nibbles_to_key(p), v) for p, v in only_b_recs)
            modified.extend((nibbles_to_key(p), va, vb) for p, va, vb in mod_recs)

        def walk(pa: Optional[Position], pb: Optional[Position], prefix: bytes) -> None:
            if pa == pb:
                return
            if pa is None:
                emit([], records(pb, prefix), [])
                return
            if pb is None:
                emit(records(pa, prefix), [], [])
                return
            na, nb = node(pa[0]), node(pb[0])
            if isinstance(na, Leaf) or isinstance(nb, Leaf):
                emit(*merge_sorted_records(records(pa, prefix), records(pb, prefix)))
                return
            if isinstance(na, Extension) and isinstance(nb, Extension):
                rest_a = na.path[pa[1]:]
                rest_b = nb.path[pb[1]:]
                shared = _common_prefix(rest_a, rest_b)
                if shared:
                    walk(advance(pa, shared), advance(pb, shared), prefix + rest_a[:shared])
                    return
            value_a, slots_a = view(pa)
            value_b, slots_b = view(pb)
            if value_a != value_b:
                if value_b is None:
                    emit([(prefix, value_a)], [], [])
                elif value_a is None:
                    emit([], [(prefix, value_b)], [])
                else:
                    emit([], [], [(prefix, value_a, value_b)])
            for i in range(16):
                sa, sb = slots_a.get(i), slots_b.get(i)
                if sa is not None or sb is not None:
                    walk(sa, sb, prefix + bytes([i]))

        walk((a, 0) if a is not None else None, (b, 0) if b is not None else None, b"")
        return only_a, only_b, modified

    # -- structure ------------------------------------------------------------

    @classmethod
    def child_ids(cls, node_bytes: bytes) -> list[NodeId]:
        node = decode_node(node_bytes)
        if isinstance(node, Branch):
            return [c for c in node.children if c is not None]
        if isinstance(node, Extension):
            return [node.child]
        return []

    def _reencode(self, node_bytes: bytes, children: dict[NodeId, NodeId], salt: int) -> bytes:
        node = decode_node(node_bytes)
        if isinstance(node, Branch):
            node = Branch(
                tuple(children.get(c, c) if c is not None else None for c in node.children),
                node.value,
            )
        elif isinstance(node, Extension):
            node = Extension(node.path, children.get(node.child, node.child))
        return encode_node(node, salt)

    def _validate(self, root: NodeId) -> None:
        stack = [root]
        seen: set[NodeId] = set()
        while stack:
            node_id = stack.pop()
            if node_id in seen:
                continue
            seen.add(node_id)
            node = self._node(node_id, None)
            if isinstance(node, Branch):
                occupied = sum(c is not None for c in node.children)
                if occupied < 2 and not (occupied == 1 and node.value is not None):
                    raise CorruptionError(
                        f"Branch {node_id.hex()[:12]} has {occupied} children"
                        f" and {'a' if node.value is not None else 'no'} value"
                    )
            elif isinstance(node, Extension):
                if not isinstance(self._node(node.child, None), Branch):
                    raise CorruptionError(
                        f"Extension {node_id.hex()[:12]} does not point at a branch"
                    )
            stack.extend(self.child_ids(self._load(node_id, None)))
