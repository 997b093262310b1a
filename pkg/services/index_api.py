"""Operations shared by the four index structures.

Each structure subclasses ``PersistentIndex`` and supplies the node-level
hooks (navigation step, insert, remove, diff, child enumeration and
re-encoding). Lookup, proofs, merge and the recursive-identity ablation
are written once here on top of those hooks.
"""

import itertools
import logging
from abc import ABC, abstractmethod
from typing import Callable, ClassVar, Iterable, Iterator, NamedTuple, Optional, Union

from models.errors import AbsentKeyError, CorruptionError, UsageError
from models.index import (
    DiffResult,
    Entry,
    MergeOutcome,
    MergeStrategy,
    Proof,
    RootHandle,
    StructureKind,
    StructureMeta,
    Trace,
)
from models.node import NodeId, node_id_of

from .node_store import NodeStore

log = logging.getLogger(__name__)

Record = tuple[bytes, bytes]
Modified = tuple[bytes, bytes, bytes]


class Step(NamedTuple):
    """Result of examining one node while searching for a key.

    A non-None ``child`` means descend with ``state``; otherwise the search
    ends here with ``value`` (None when the key is absent).
    """

    child: Optional[NodeId] = None
    state: int = 0
    value: Optional[bytes] = None


class SubTree(NamedTuple):
    """An unexpanded subtree inside an ordered record stream."""

    node_id: NodeId
    level: int
    hi: Optional[bytes]


def _ends_before(a: Optional[bytes], b: Optional[bytes]) -> bool:
    return a is not None and (b is None or a < b)


def ordered_diff(
    a: Optional[SubTree],
    b: Optional[SubTree],
    expand: Callable[[SubTree], list[Union[SubTree, Record]]],
) -> tuple[list[Record], list[Record], list[Modified]]:
    """Merge-walk two key-ordered trees, skipping subtrees with equal digests.

    ``expand`` turns a subtree into its items in key order: records for a
    leaf, child subtrees for an internal node. Two identical subtrees at the
    head of both streams hold the same records, so both are dropped without
    being read.
    """
    only_a: list[Record] = []
    only_b: list[Record] = []
    modified: list[Modified] = []
    left: list = [a] if a is not None else []
    right: list = [b] if b is not None else []

    def open_top(stack: list) -> None:
        items = expand(stack.pop())
        stack.extend(reversed(items))

    while left or right:
        x = left[-1] if left else None
        y = right[-1] if right else None
        x_sub = isinstance(x, SubTree)
        y_sub = isinstance(y, SubTree)
        if x_sub and y_sub:
            if x.node_id == y.node_id:
                left.pop()
                right.pop()
            elif x.level != y.level:
                open_top(left if x.level > y.level else right)
            elif x.hi == y.hi:
                open_top(left)
                open_top(right)
            elif _ends_before(x.hi, y.hi):
                open_top(left)
            else:
                open_top(right)
        elif x_sub:
            open_top(left)
        elif y_sub:
            open_top(right)
        elif x is None:
            only_b.append(right.pop())
        elif y is None:
            only_a.append(left.pop())
        elif x[0] < y[0]:
            only_a.append(left.pop())
        elif y[0] < x[0]:
            only_b.append(right.pop())
        else:
            left.pop()
            right.pop()
            if x[1] != y[1]:
                modified.append((x[0], x[1], y[1]))
    return only_a, only_b, modified


def merge_sorted_records(
    a: list[Record], b: list[Record]
) -> tuple[list[Record], list[Record], list[Modified]]:
    """Record-level diff of two key-sorted record lists."""
    only_a: list[Record] = []
    only_b: list[Record] = []
    modified: list[Modified] = []
    i = j = 0
    while i < len(a) and j < len(b):
        ka, va = a[i]
        kb, vb = b[j]
        if ka < kb:
            only_a.append(a[i])
            i += 1
        elif kb < ka:
            only_b.append(b[j])
            j += 1
        else:
            if va != vb:
                modified.append((ka, va, vb))
            i += 1
            j += 1
    only_a.extend(a[i:])
    only_b.extend(b[j:])
    return only_a, only_b, modified


class PersistentIndex(ABC):
    """An immutable, content-addressed key/value index.

    Every write returns a new ``RootHandle``; old handles stay valid and
    share every unchanged node with the new version.
    """

    kind: ClassVar[StructureKind]
    meta_type: ClassVar[type]

    def __init__(self, store: NodeStore, meta: Optional[StructureMeta] = None):
        self.store = store
        self.meta = meta if meta is not None else self.meta_type()
        if not isinstance(self.meta, self.meta_type):
            raise UsageError(
                f"Invalid meta for {self.kind}: {type(self.meta).__name__}"
            )
        self._salts = itertools.count(1)

    # -- node plumbing ------------------------------------------------------

    def _load(self, node_id: NodeId, trace: Optional[Trace]) -> bytes:
        data = self.store.get(node_id)
        if data is None:
            raise CorruptionError(f"Dangling node reference {node_id.hex()}")
        if trace is not None:
            trace.visits += 1
        return data

    def _save(self, node_bytes: bytes, trace: Optional[Trace]) -> NodeId:
        if trace is not None:
            trace.nodes_written += 1
            trace.bytes_written += len(node_bytes)
        return self.store.put(node_bytes)

    # -- structure hooks ----------------------------------------------------

    @abstractmethod
    def _prepare(self, key: bytes):
        """Per-key data the navigation step needs (nibbles, bucket path, or the key)."""

    @abstractmethod
    def _step(self, node_bytes: bytes, prepared, state: int) -> Step:
        """One navigation step; must only rely on ``node_bytes``."""

    @abstractmethod
    def _insert(
        self, root: Optional[NodeId], key: bytes, value: bytes, trace: Trace
    ) -> Optional[NodeId]:
        ...

    @abstractmethod
    def _remove(self, root: Optional[NodeId], key: bytes, trace: Trace) -> Optional[NodeId]:
        ...

    def _put_batch(
        self, root: Optional[NodeId], records: list[Record], trace: Trace
    ) -> Optional[NodeId]:
        for key, value in records:
            root = self._insert(root, key, value, trace)
        return root

    @abstractmethod
    def _diff(
        self, a: Optional[NodeId], b: Optional[NodeId], trace: Trace
    ) -> tuple[list[Record], list[Record], list[Modified]]:
        ...

    @abstractmethod
    def _iter_records(self, root: Optional[NodeId], trace: Optional[Trace]) -> Iterator[Record]:
        ...

    @classmethod
    @abstractmethod
    def child_ids(cls, node_bytes: bytes) -> list[NodeId]:
        """Digests referenced by a node, in layout order."""

    @abstractmethod
    def _reencode(self, node_bytes: bytes, children: dict[NodeId, NodeId], salt: int) -> bytes:
        """Same node with children replaced through ``children`` and the given salt."""

    def _empty_root(self) -> Optional[NodeId]:
        return None

    def _validate(self, root: NodeId) -> None:
        """Structure-specific shape checks; raise CorruptionError on violation."""

    # -- public operations --------------------------------------------------

    def _check(self, *handles: RootHandle) -> None:
        for handle in handles:
            if handle.kind is not self.kind or handle.meta != self.meta:
                raise UsageError(
                    f"Root {handle} does not belong to this {self.kind} index"
                )

    def empty(self) -> RootHandle:
        """Handle of the index holding no records."""
        return RootHandle(kind=self.kind, root=self._empty_root(), meta=self.meta)

    def lookup(self, handle: RootHandle, key: bytes, trace: Optional[Trace] = None) -> Optional[bytes]:
        """Value bound to ``key`` under ``handle``, or None."""
        self._check(handle)
        node_id = handle.root
        prepared = self._prepare(key)
        state = 0
        while node_id is not None:
            step = self._step(self._load(node_id, trace), prepared, state)
            if step.child is None:
                return step.value
            node_id, state = step.child, step.state
        return None

    def insert(
        self, handle: RootHandle, key: bytes, value: bytes, trace: Optional[Trace] = None
    ) -> RootHandle:
        """New version with ``key`` bound to ``value``; ``handle`` is untouched."""
        self._check(handle)
        Entry(key, value)
        return self._write(handle, trace, lambda root, t: self._insert(root, key, value, t))

    def remove(self, handle: RootHandle, key: bytes, trace: Optional[Trace] = None) -> RootHandle:
        """Remove ``key``; removing an absent key returns an identical root."""
        self._check(handle)
        return self._write(handle, trace, lambda root, t: self._remove(root, key, t))

    def put_batch(
        self,
        handle: RootHandle,
        entries: Iterable[Union[Entry, Record]],
        trace: Optional[Trace] = None,
    ) -> RootHandle:
        """Upsert many records at once; keys must be unique within the batch."""
        self._check(handle)
        records: dict[bytes, bytes] = {}
        for item in entries:
            entry = item if isinstance(item, Entry) else Entry(*item)
            if entry.key in records:
                raise UsageError(f"Duplicate key in batch: {entry.key!r}")
            records[entry.key] = entry.value
        if not records:
            return handle
        batch = sorted(records.items())
        return self._write(handle, trace, lambda root, t: self._put_batch(root, batch, t))

    def _write(
        self,
        handle: RootHandle,
        trace: Optional[Trace],
        op: Callable[[Optional[NodeId], Trace], Optional[NodeId]],
    ) -> RootHandle:
        trace = trace if trace is not None else Trace()
        if not handle.copy_all:
            return handle.with_root(op(handle.root, trace))
        inner = Trace()
        root = op(handle.root, inner)
        trace.visits += inner.visits
        if root is not None:
            root = self._copy_all(root, next(self._salts), trace)
        return handle.with_root(root)

    def _copy_all(self, root: NodeId, salt: int, trace: Trace) -> NodeId:
        copies: dict[NodeId, NodeId] = {}

        def copy(node_id: NodeId) -> NodeId:
            if node_id in copies:
                return copies[node_id]
            data = self._load(node_id, trace)
            mapping = {child: copy(child) for child in self.child_ids(data)}
            new_id = self._save(self._reencode(data, mapping, salt), trace)
            copies[node_id] = new_id
            return new_id

        return copy(root)

    def with_recursive_identity_disabled(self, handle: RootHandle) -> RootHandle:
        """Handle whose later writes copy every node under a fresh salt."""
        self._check(handle)
        return RootHandle(kind=handle.kind, root=handle.root, meta=handle.meta, copy_all=True)

    def diff(self, a: RootHandle, b: RootHandle, trace: Optional[Trace] = None) -> DiffResult:
        """Records only in ``a``, only in ``b``, and present in both with different values."""
        if a.kind is not b.kind or a.meta != b.meta:
            raise UsageError(f"Cannot diff {a} against {b}: kind or parameters differ")
        self._check(a, b)
        trace = trace if trace is not None else Trace()
        if a.root == b.root:
            trace.visits += 1
            return DiffResult()
        only_a, only_b, modified = self._diff(a.root, b.root, trace)
        return DiffResult(
            only_in_a=[Entry(k, v) for k, v in sorted(only_a)],
            only_in_b=[Entry(k, v) for k, v in sorted(only_b)],
            modified=sorted(modified),
        )

    def merge(
        self,
        a: RootHandle,
        b: RootHandle,
        strategy: MergeStrategy = MergeStrategy.ABORT,
        trace: Optional[Trace] = None,
    ) -> MergeOutcome:
        """Three-way-free merge: ``a`` plus whatever ``b`` adds, conflicts per strategy."""
        result = self.diff(a, b, trace)
        if result.modified and strategy is MergeStrategy.ABORT:
            return MergeOutcome(conflicts=result.modified)
        updates = list(result.only_in_b)
        if strategy is MergeStrategy.TAKE_B:
            updates.extend(Entry(k, vb) for k, _, vb in result.modified)
        return MergeOutcome(root=self.put_batch(a, updates, trace))

    def prove(self, handle: RootHandle, key: bytes) -> Proof:
        """Path of serialized nodes from the root down to ``key``'s record."""
        self._check(handle)
        node_id = handle.root
        prepared = self._prepare(key)
        state = 0
        path: list[bytes] = []
        while node_id is not None:
            data = self._load(node_id, None)
            path.append(data)
            step = self._step(data, prepared, state)
            if step.child is None:
                if step.value is None:
                    break
                return Proof(path_nodes=tuple(path))
            node_id, state = step.child, step.state
        raise AbsentKeyError(f"Key {key!r} is not present under {handle}")

    def verify(self, digest: bytes, key: bytes, value: bytes, proof: Proof) -> bool:
        """Check a proof against a root digest without touching the store."""
        nodes = proof.path_nodes
        if not nodes or node_id_of(nodes[0]) != digest:
            return False
        prepared = self._prepare(key)
        state = 0
        for i, data in enumerate(nodes):
            try:
                step = self._step(data, prepared, state)
            except (CorruptionError, IndexError, ValueError):
                return False
            if step.child is None:
                return i == len(nodes) - 1 and step.value == value
            if i + 1 >= len(nodes) or node_id_of(nodes[i + 1]) != step.child:
                return False
            state = step.state
        return False

    def entries(self, handle: RootHandle) -> list[Entry]:
        """Every record under ``handle``, sorted by key."""
        self._check(handle)
        return [Entry(k, v) for k, v in sorted(self._iter_records(handle.root, None))]

    def count(self, handle: RootHandle) -> int:
        """Number of records under ``handle``."""
        self._check(handle)
        return sum(1 for _ in self._iter_records(handle.root, None))

    def path_length(self, handle: RootHandle, key: bytes) -> int:
        """Nodes visited by a lookup of ``key``."""
        trace = Trace()
        self.lookup(handle, key, trace)
        return trace.visits

    def height(self, handle: RootHandle) -> int:
        """Nodes on the longest root-to-leaf path."""
        self._check(handle)
        if handle.root is None:
            return 0
        depths: dict[NodeId, int] = {}

        def depth(node_id: NodeId) -> int:
            if node_id not in depths:
                kids = self.child_ids(self._load(node_id, None))
                depths[node_id] = 1 + max((depth(c) for c in kids), default=0)
            return depths[node_id]

        return depth(handle.root)

    def node_count(self, handle: RootHandle) -> int:
        """Distinct nodes reachable from ``handle``."""
        self._check(handle)
        if handle.root is None:
            return 0
        seen = {handle.root}
        stack = [handle.root]
        while stack:
            for child in self.child_ids(self._load(stack.pop(), None)):
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        return len(seen)

    def validate(self, handle: RootHandle) -> None:
        """Raise CorruptionError if the tree under ``handle`` is not in canonical shape."""
        self._check(handle)
        if handle.root is not None:
            self._validate(handle.root)
