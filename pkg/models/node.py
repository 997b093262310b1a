"""Node identity and store statistics."""

import hashlib
from dataclasses import dataclass
from typing import NewType

NodeId = NewType("NodeId", bytes)

DIGEST_SIZE = 32


def node_id_of(node_bytes: bytes) -> NodeId:
    """Return the content digest that identifies a serialized node."""
    return NodeId(hashlib.sha256(node_bytes).digest())


@dataclass(frozen=True)
class StoreStats:
    """Distinct node count and their total serialized size."""

    node_count: int = 0
    total_bytes: int = 0

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {"node_count": self.node_count, "total_bytes": self.total_bytes}

    def __str__(self) -> str:
        return f"{self.node_count} nodes, {self.total_bytes} bytes"
