"""Managers tying index structures and named roots together."""

from typing import Optional

from models.errors import UsageError
from models.index import Proof, RootHandle, StructureKind, StructureMeta

from .data_manager import DataManager
from .index_api import PersistentIndex
from .mbt import MerkleBucketTree
from .mpt import MerklePatriciaTrie
from .mvmb_tree import MvmbTree
from .node_store import NodeStore
from .pos_tree import PosTree

INDEX_TYPES: dict[StructureKind, type[PersistentIndex]] = {
    StructureKind.MPT: MerklePatriciaTrie,
    StructureKind.MBT: MerkleBucketTree,
    StructureKind.POS: PosTree,
    StructureKind.MVMB: MvmbTree,
}


def index_type(kind: StructureKind) -> type[PersistentIndex]:
    """Index class implementing ``kind``."""
    return INDEX_TYPES[kind]


class IndexManager:
    """Hands out one index object per (kind, parameters) over a shared store."""

    def __init__(self, store: NodeStore):
        self.store = store
        self._indexes: dict[tuple[StructureKind, StructureMeta], PersistentIndex] = {}

    def get(self, kind: StructureKind, meta: Optional[StructureMeta] = None) -> PersistentIndex:
        """Get the index for ``kind`` with ``meta`` (defaults when omitted)."""
        cls = INDEX_TYPES[kind]
        meta = meta if meta is not None else cls.meta_type()
        if (kind, meta) not in self._indexes:
            self._indexes[(kind, meta)] = cls(self.store, meta)
        return self._indexes[(kind, meta)]

    def for_root(self, handle: RootHandle) -> PersistentIndex:
        """Get the index a handle was built with."""
        return self.get(handle.kind, handle.meta)

    def verify(self, handle: RootHandle, key: bytes, value: bytes, proof: Proof) -> bool:
        """Check a proof against ``handle``'s digest."""
        if handle.root is None:
            return False
        return self.for_root(handle).verify(handle.root, key, value, proof)


def verify_proof(
    kind: StructureKind,
    meta: StructureMeta,
    digest: bytes,
    key: bytes,
    value: bytes,
    proof: Proof,
) -> bool:
    """Verify a proof with only the structure's parameters; no store is consulted."""
    return INDEX_TYPES[kind](NodeStore(), meta).verify(digest, key, value, proof)


class RootManager:
    """Manages the catalog of named roots in a workspace."""

    def __init__(self, data_manager: DataManager):
        self.db = data_manager
        self.indexes = IndexManager(data_manager.store)

    def get_all(self) -> dict[str, RootHandle]:
        """Get all named roots."""
        return dict(sorted(self.db.roots.items()))

    def get_by_name(self, name: str) -> Optional[RootHandle]:
        """Get a root by name."""
        return self.db.roots.get(name)

    def require(self, name: str) -> RootHandle:
        handle = self.get_by_name(name)
        if handle is None:
            raise UsageError(f"Unknown root: {name}")
        return handle

    def add(self, name: str, handle: RootHandle) -> None:
        """Add or replace a named root and persist the workspace."""
        if not name:
            raise UsageError("Root name must not be empty")
        self.db.roots[name] = handle
        self.db.commit()

    def delete(self, name: str) -> bool:
        """Delete a named root; its nodes stay in the store."""
        if self.db.roots.pop(name, None) is None:
            return False
        self.db.commit()
        return True
