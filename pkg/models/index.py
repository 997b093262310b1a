"""Index-level value types: records, root handles, structure parameters, results."""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

from .chunk_config import ChunkConfig
from .errors import UsageError
from .node import NodeId

MAX_KEY_BYTES = 1024
MAX_VALUE_BYTES = 64 * 1024


class StructureKind(str, Enum):
    """The four index structures."""

    MPT = "mpt"
    MBT = "mbt"
    POS = "pos"
    MVMB = "mvmb"

    @classmethod
    def parse(cls, name: str) -> "StructureKind":
        """Look up a structure by its CLI name."""
        try:
            return cls(name.lower())
        except ValueError:
            raise UsageError(
                f"Invalid structure: {name}. Must be one of {[k.value for k in cls]}"
            ) from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Entry:
    """One key/value record."""

    key: bytes
    value: bytes

    def __post_init__(self):
        """Validate fields after initialization."""
        if not 1 <= len(self.key) <= MAX_KEY_BYTES:
            raise UsageError(
                f"Invalid key length: {len(self.key)}. Must be in [1, {MAX_KEY_BYTES}]"
            )
        if len(self.value) > MAX_VALUE_BYTES:
            raise UsageError(
                f"Invalid value length: {len(self.value)}. Must be <= {MAX_VALUE_BYTES}"
            )

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {"key": self.key.hex(), "value": self.value.hex()}

    @classmethod
    def from_dict(cls, data: dict) -> "Entry":
        """Create instance from dictionary."""
        return cls(key=bytes.fromhex(data["key"]), value=bytes.fromhex(data["value"]))

    def __str__(self) -> str:
        return f"{self.key!r} -> {len(self.value)} bytes"


@dataclass(frozen=True)
class MptMeta:
    """The trie has no tunable parameters."""

    def to_dict(self) -> dict:
        return {}

    @classmethod
    def from_dict(cls, data: dict) -> "MptMeta":
        return cls()


@dataclass(frozen=True)
class MbtMeta:
    """Static bucket tree shape: ``capacity`` buckets under a ``fanout``-ary tree."""

    capacity: int = 1024
    fanout: int = 4

    def __post_init__(self):
        """Validate fields after initialization."""
        if self.capacity < 1:
            raise UsageError(f"Invalid bucket capacity: {self.capacity}. Must be >= 1")
        if self.fanout < 2:
            raise UsageError(f"Invalid fanout: {self.fanout}. Must be >= 2")

    def to_dict(self) -> dict:
        return {"capacity": self.capacity, "fanout": self.fanout}

    @classmethod
    def from_dict(cls, data: dict) -> "MbtMeta":
        return cls(capacity=data["capacity"], fanout=data["fanout"])


@dataclass(frozen=True)
class PosMeta:
    """Chunking parameters for the leaf level and for internal levels."""

    leaf: ChunkConfig = field(default_factory=lambda: ChunkConfig.for_node_bytes(1024))
    internal: ChunkConfig = field(
        default_factory=lambda: ChunkConfig.internal_for_node_bytes(1024)
    )

    @classmethod
    def for_node_bytes(cls, node_bytes: int, window_bytes: int = 67) -> "PosMeta":
        return cls(
            leaf=ChunkConfig.for_node_bytes(node_bytes, window_bytes),
            internal=ChunkConfig.internal_for_node_bytes(node_bytes),
        )

    @classmethod
    def noms_preset(cls) -> "PosMeta":
        """4 KiB nodes with a 67-byte rolling window."""
        return cls.for_node_bytes(4096, window_bytes=67)

    def ablated(self) -> "PosMeta":
        """Leaf chunking that only ever splits locally; see ``ChunkConfig.ablated``."""
        return replace(self, leaf=self.leaf.ablated())

    def to_dict(self) -> dict:
        return {"leaf": self.leaf.to_dict(), "internal": self.internal.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "PosMeta":
        return cls(
            leaf=ChunkConfig.from_dict(data["leaf"]),
            internal=ChunkConfig.from_dict(data["internal"]),
        )


@dataclass(frozen=True)
class MvmbMeta:
    """B+-tree order: leaves hold up to ``order - 1`` entries, internal nodes up to ``order`` children."""

    order: int = 5

    def __post_init__(self):
        """Validate fields after initialization."""
        if self.order < 3:
            raise UsageError(f"Invalid order: {self.order}. Must be >= 3")

    @property
    def max_entries(self) -> int:
        return self.order - 1

    @property
    def min_entries(self) -> int:
        return self.order // 2

    @property
    def max_children(self) -> int:
        return self.order

    @property
    def min_children(self) -> int:
        return (self.order + 1) // 2

    @classmethod
    def for_node_bytes(cls, node_bytes: int, mean_entry_bytes: int) -> "MvmbMeta":
        """Order whose full leaves come close to ``node_bytes``."""
        return cls(order=max(3, round(node_bytes / max(1, mean_entry_bytes)) + 1))

    def to_dict(self) -> dict:
        return {"order": self.order}

    @classmethod
    def from_dict(cls, data: dict) -> "MvmbMeta":
        return cls(order=data["order"])


StructureMeta = Union[MptMeta, MbtMeta, PosMeta, MvmbMeta]

META_TYPES: dict[StructureKind, type] = {
    StructureKind.MPT: MptMeta,
    StructureKind.MBT: MbtMeta,
    StructureKind.POS: PosMeta,
    StructureKind.MVMB: MvmbMeta,
}


@dataclass(frozen=True)
class RootHandle:
    """An immutable version: structure kind, root digest and the parameters it was built with.

    ``root`` is None for the empty index. ``copy_all`` marks a handle whose
    writes copy every node (the recursive-identity ablation).
    """

    kind: StructureKind
    root: Optional[NodeId]
    meta: StructureMeta
    copy_all: bool = False

    def __post_init__(self):
        """Validate fields after initialization."""
        expected = META_TYPES[self.kind]
        if not isinstance(self.meta, expected):
            raise UsageError(
                f"Invalid meta for {self.kind}: {type(self.meta).__name__}. "
                f"Must be {expected.__name__}"
            )

    @property
    def digest(self) -> Optional[bytes]:
        return self.root

    def with_root(self, root: Optional[NodeId]) -> "RootHandle":
        return replace(self, root=root)

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "kind": self.kind.value,
            "root": self.root.hex() if self.root is not None else None,
            "meta": self.meta.to_dict(),
            "copy_all": self.copy_all,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RootHandle":
        """Create instance from dictionary."""
        kind = StructureKind.parse(data["kind"])
        root = data.get("root")
        return cls(
            kind=kind,
            root=NodeId(bytes.fromhex(root)) if root else None,
            meta=META_TYPES[kind].from_dict(data.get("meta", {})),
            copy_all=data.get("copy_all", False),
        )

    def __str__(self) -> str:
        root = self.root.hex()[:12] if self.root is not None else "empty"
        return f"{self.kind}:{root}"


class MergeStrategy(str, Enum):
    """What to do with keys whose values differ on both sides."""

    ABORT = "abort"
    TAKE_A = "take_a"
    TAKE_B = "take_b"


@dataclass
class DiffResult:
    """Record-level difference between two roots, each list sorted by key."""

    only_in_a: list[Entry] = field(default_factory=list)
    only_in_b: list[Entry] = field(default_factory=list)
    modified: list[tuple[bytes, bytes, bytes]] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not (self.only_in_a or self.only_in_b or self.modified)

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "only_in_a": [e.to_dict() for e in self.only_in_a],
            "only_in_b": [e.to_dict() for e in self.only_in_b],
            "modified": [
                {"key": k.hex(), "value_a": va.hex(), "value_b": vb.hex()}
                for k, va, vb in self.modified
            ],
        }

    def __str__(self) -> str:
        return (
            f"-{len(self.only_in_a)} +{len(self.only_in_b)} "
            f"~{len(self.modified)}"
        )


@dataclass
class MergeOutcome:
    """Either a merged root or the list of conflicting keys."""

    root: Optional[RootHandle] = None
    conflicts: list[tuple[bytes, bytes, bytes]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.root is not None


@dataclass(frozen=True)
class Proof:
    """Serialized nodes on the path from the root to the key's record, root first."""

    path_nodes: tuple[bytes, ...]

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {"path_nodes": [n.hex() for n in self.path_nodes]}

    @classmethod
    def from_dict(cls, data: dict) -> "Proof":
        """Create instance from dictionary."""
        return cls(path_nodes=tuple(bytes.fromhex(n) for n in data["path_nodes"]))

    def __len__(self) -> int:
        return len(self.path_nodes)


@dataclass
class Trace:
    """Counters filled in by index operations."""

    visits: int = 0
    nodes_written: int = 0
    bytes_written: int = 0

    def add(self, other: "Trace") -> None:
        """Fold another trace's counters into this one."""
        self.visits += other.visits
        self.nodes_written += other.nodes_written
        self.bytes_written += other.bytes_written

    def to_dict(self) -> dict:
        return {
            "visits": self.visits,
            "nodes_written": self.nodes_written,
            "bytes_written": self.bytes_written,
        }
