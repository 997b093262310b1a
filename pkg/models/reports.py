"""Deduplication measurements and the parameters of the analytical model."""

from dataclasses import dataclass
from typing import Optional

from .errors import UsageError
from .node import DIGEST_SIZE


@dataclass(frozen=True)
class DedupReport:
    """Storage shared between a set of versions.

    ``dedup_ratio`` is 1 - union/sum over reachable node bytes and
    ``node_sharing_ratio`` the same over node counts.
    """

    union_bytes: int
    sum_bytes: int
    union_nodes: int
    sum_nodes: int
    predicted_ratio: Optional[float] = None

    @property
    def dedup_ratio(self) -> float:
        if self.sum_bytes == 0:
            return 0.0
        return 1.0 - self.union_bytes / self.sum_bytes

    @property
    def node_sharing_ratio(self) -> float:
        if self.sum_nodes == 0:
            return 0.0
        return 1.0 - self.union_nodes / self.sum_nodes

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "union_bytes": self.union_bytes,
            "sum_bytes": self.sum_bytes,
            "union_nodes": self.union_nodes,
            "sum_nodes": self.sum_nodes,
            "dedup_ratio": self.dedup_ratio,
            "node_sharing_ratio": self.node_sharing_ratio,
            "predicted_ratio": self.predicted_ratio,
        }

    def __str__(self) -> str:
        return f"eta={self.dedup_ratio:.4f} sharing={self.node_sharing_ratio:.4f}"


@dataclass(frozen=True)
class TheoryParams:
    """Inputs of the closed-form deduplication model for two versions.

    ``n`` records, ``delta`` of them changed between versions, bucket count
    ``b``, longest and mean key length, mean record size and digest size.
    """

    n: int
    delta: int
    b: int = 1024
    m: int = 4
    max_key_len: float = 15.0
    mean_key_len: float = 10.0
    record_bytes: float = 266.0
    hash_bytes: int = DIGEST_SIZE

    def __post_init__(self):
        """Validate fields after initialization."""
        if self.n < 1:
            raise UsageError(f"Invalid n: {self.n}. Must be >= 1")
        if not 0 <= self.delta <= self.n:
            raise UsageError(f"Invalid delta: {self.delta}. Must be in [0, {self.n}]")
        if self.b < 1 or self.m < 2:
            raise UsageError(f"Invalid bucket shape: B={self.b} m={self.m}")
        if self.record_bytes <= 0 or self.mean_key_len <= 0:
            raise UsageError("Record and key sizes must be positive")

    @property
    def alpha(self) -> float:
        return self.delta / self.n

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "n": self.n,
            "delta": self.delta,
            "alpha": self.alpha,
            "b": self.b,
            "m": self.m,
            "max_key_len": self.max_key_len,
            "mean_key_len": self.mean_key_len,
            "record_bytes": self.record_bytes,
            "hash_bytes": self.hash_bytes,
        }
