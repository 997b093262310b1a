"""On-disk workspace: a node store snapshot plus a catalog of named roots."""

import json
import logging
from pathlib import Path
from typing import Optional

from models.errors import SnapshotError
from models.index import RootHandle

from .node_store import NodeStore

log = logging.getLogger(__name__)

SNAPSHOT_FILE = "nodes.siri"
CATALOG_FILE = "roots.json"


class DataManager:
    """Handles persistence of the node store and the root catalog."""

    def __init__(self, data_dir: str = "data"):
        """Initialize the data manager.

        Args:
            data_dir: Directory holding the snapshot and the catalog.
        """
        self.data_dir = Path(data_dir)
        self._ensure_data_dir()
        self._store: Optional[NodeStore] = None
        self.roots: dict[str, RootHandle] = {}
        self._load_catalog()

    def _ensure_data_dir(self) -> None:
        """Create data directory if it doesn't exist."""
        self.data_dir.mkdir(parents=True, exist_ok=True)

    @property
    def snapshot_path(self) -> Path:
        return self.data_dir / SNAPSHOT_FILE

    @property
    def catalog_path(self) -> Path:
        return self.data_dir / CATALOG_FILE

    @property
    def store(self) -> NodeStore:
        """Get or load the node store."""
        if self._store is None:
            if self.snapshot_path.exists():
                store = NodeStore.load(self.snapshot_path)
                self._check_roots(store)
                self._store = store
            else:
                self._store = NodeStore()
        return self._store

    def _load_catalog(self) -> None:
        if not self.catalog_path.exists():
            return
        try:
            data = json.loads(self.catalog_path.read_text(encoding="utf-8"))
            self.roots = {name: RootHandle.from_dict(h) for name, h in data.items()}
        except (ValueError, KeyError, TypeError) as e:
            raise SnapshotError(f"Malformed root catalog {self.catalog_path}: {e}") from e

    def commit(self) -> None:
        """Write the store snapshot and the catalog."""
        self.store.snapshot(self.snapshot_path)
        payload = {name: handle.to_dict() for name, handle in sorted(self.roots.items())}
        self.catalog_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        log.info("Saved %d roots and %s to %s", len(self.roots), self.store.stats(), self.data_dir)

    def _check_roots(self, store: NodeStore) -> None:
        """Every node reachable from a cataloged root must be in the loaded snapshot."""
        from .managers import index_type

        seen: set = set()
        for handle in self.roots.values():
            if handle.root is None:
                continue
            child_ids = index_type(handle.kind).child_ids
            stack = [handle.root]
            while stack:
                node_id = stack.pop()
                if node_id in seen:
                    continue
                seen.add(node_id)
                store.check_present([node_id], self.snapshot_path)
                stack.extend(child_ids(store.require(node_id)))
