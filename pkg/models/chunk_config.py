"""Content-defined chunking parameters."""

from dataclasses import dataclass, replace

from .errors import UsageError

# Rough serialized size of one internal POS item: a short split key plus a child digest.
INTERNAL_ITEM_BYTES = 48
LEAF_CAP_FACTOR = 16


@dataclass(frozen=True)
class ChunkConfig:
    """Rolling-hash chunking parameters.

    A boundary is declared where the low ``pattern_bits`` bits of the window
    fingerprint equal ``pattern_value``. Chunks shorter than
    ``min_chunk_bytes`` are never cut by pattern; chunks reaching
    ``max_chunk_bytes`` are always cut. With ``local_splits`` set the forced
    cut fires at half the maximum instead.
    """

    window_bytes: int = 67
    pattern_bits: int = 9
    pattern_value: int = 0
    max_chunk_bytes: int = 12288
    min_chunk_bytes: int = 256
    local_splits: bool = False

    def __post_init__(self):
        """Validate fields after initialization."""
        if self.window_bytes < 1:
            raise UsageError(f"Invalid window_bytes: {self.window_bytes}. Must be >= 1")
        if not 0 <= self.pattern_bits <= 63:
            raise UsageError(
                f"Invalid pattern_bits: {self.pattern_bits}. Must be in [0, 63]"
            )
        if not 0 <= self.pattern_value < (1 << self.pattern_bits):
            raise UsageError(
                f"Invalid pattern_value: {self.pattern_value}. "
                f"Must fit in {self.pattern_bits} bits"
            )
        if self.max_chunk_bytes < (2 if self.local_splits else 1):
            raise UsageError(f"Invalid max_chunk_bytes: {self.max_chunk_bytes}")
        if not 0 <= self.min_chunk_bytes < self.max_chunk_bytes:
            raise UsageError(
                f"Invalid min_chunk_bytes: {self.min_chunk_bytes}. "
                f"Must be in [0, {self.max_chunk_bytes})"
            )

    @property
    def mask(self) -> int:
        return (1 << self.pattern_bits) - 1

    @property
    def forced_split_bytes(self) -> int:
        """Chunk length at which a cut is forced."""
        if self.local_splits:
            return self.max_chunk_bytes // 2
        return self.max_chunk_bytes

    @property
    def expected_chunk_bytes(self) -> int:
        """Minimum length plus the mean gap between pattern matches."""
        return self.min_chunk_bytes + (1 << self.pattern_bits)

    @classmethod
    def for_node_bytes(cls, node_bytes: int, window_bytes: int = 67) -> "ChunkConfig":
        """Leaf-level preset aiming at chunks of roughly ``node_bytes``; the cap is 16x the expected chunk."""
        if node_bytes < 8:
            raise UsageError(f"Invalid node size: {node_bytes}. Must be >= 8")
        min_chunk = node_bytes // 4
        pattern_bits = max(0, (node_bytes - min_chunk).bit_length() - 1)
        expected = min_chunk + (1 << pattern_bits)
        return cls(
            window_bytes=window_bytes,
            pattern_bits=pattern_bits,
            max_chunk_bytes=LEAF_CAP_FACTOR * expected,
            min_chunk_bytes=min_chunk,
        )

    @classmethod
    def internal_for_node_bytes(cls, node_bytes: int) -> "ChunkConfig":
        """Internal-level preset: pattern width chosen for ``node_bytes`` worth of child entries."""
        if node_bytes < 8:
            raise UsageError(f"Invalid node size: {node_bytes}. Must be >= 8")
        fanout = max(2, node_bytes // INTERNAL_ITEM_BYTES)
        return cls(
            window_bytes=1,
            pattern_bits=max(1, fanout.bit_length() - 1),
            max_chunk_bytes=node_bytes * 4,
            min_chunk_bytes=0,
        )

    def ablated(self) -> "ChunkConfig":
        """Variant where patterns are rare and oversized chunks are split locally."""
        return replace(
            self,
            pattern_bits=min(63, self.pattern_bits + 5),
            pattern_value=0,
            max_chunk_bytes=max(2, 2 * self.expected_chunk_bytes),
            min_chunk_bytes=0,
            local_splits=True,
        )

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        return {
            "window_bytes": self.window_bytes,
            "pattern_bits": self.pattern_bits,
            "pattern_value": self.pattern_value,
            "max_chunk_bytes": self.max_chunk_bytes,
            "min_chunk_bytes": self.min_chunk_bytes,
            "local_splits": self.local_splits,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChunkConfig":
        """Create instance from dictionary."""
        return cls(
            window_bytes=data["window_bytes"],
            pattern_bits=data["pattern_bits"],
            pattern_value=data.get("pattern_value", 0),
            max_chunk_bytes=data["max_chunk_bytes"],
            min_chunk_bytes=data.get("min_chunk_bytes", 0),
            local_splits=data.get("local_splits", False),
        )

    def __str__(self) -> str:
        return (
            f"q={self.pattern_bits} window={self.window_bytes} "
            f"min={self.min_chunk_bytes} max={self.max_chunk_bytes}"
        )
