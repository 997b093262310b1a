"""Byte layout helpers shared by the node encodings.

Every node starts with a tag byte. A set high bit marks a salted node
(recursive-identity ablation): a varint salt follows the tag and plays no
part in decoding beyond making the bytes unique.
"""

from typing import Optional

from models.errors import CorruptionError
from models.node import DIGEST_SIZE, NodeId

SALT_FLAG = 0x80


class NodeWriter:
    """Accumulates one node's bytes."""

    __slots__ = ("_buf",)

    def __init__(self, tag: int, salt: int = 0):
        self._buf = bytearray()
        if salt:
            self._buf.append(tag | SALT_FLAG)
            self.varint(salt)
        else:
            self._buf.append(tag)

    def varint(self, value: int) -> "NodeWriter":
        """Unsigned LEB128 varint."""
        if value < 0:
            raise ValueError(f"varint must be non-negative, got {value}")
        buf = self._buf
        while value >= 0x80:
            buf.append((value & 0x7F) | 0x80)
            value >>= 7
        buf.append(value)
        return self

    def byte(self, value: int) -> "NodeWriter":
        self._buf.append(value)
        return self

    def raw(self, data: bytes) -> "NodeWriter":
        self._buf += data
        return self

    def blob(self, data: bytes) -> "NodeWriter":
        """Length-prefixed bytes."""
        self.varint(len(data))
        self._buf += data
        return self

    def node_id(self, node_id: NodeId) -> "NodeWriter":
        """Fixed-width digest, no length prefix."""
        self._buf += node_id
        return self

    def finish(self) -> bytes:
        """The node's serialized bytes."""
        return bytes(self._buf)


class NodeReader:
    """Sequential decoder over one node's bytes; any overrun is corruption."""

    __slots__ = ("data", "pos", "tag", "salt")

    def __init__(self, data: bytes):
        if not data:
            raise CorruptionError("Empty node")
        self.data = data
        self.pos = 1
        self.tag = data[0] & ~SALT_FLAG
        self.salt = self.varint() if data[0] & SALT_FLAG else 0

    def varint(self) -> int:
        """Read an unsigned LEB128 varint."""
        data = self.data
        result = 0
        shift = 0
        while True:
            if self.pos >= len(data):
                raise CorruptionError("Truncated varint")
            b = data[self.pos]
            self.pos += 1
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result
            shift += 7
            if shift > 63:
                raise CorruptionError("Varint too long")

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise CorruptionError("Truncated node")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def raw(self, n: int) -> bytes:
        """Read exactly ``n`` bytes."""
        end = self.pos + n
        if end > len(self.data):
            raise CorruptionError("Truncated node")
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    def blob(self) -> bytes:
        return self.raw(self.varint())

    def node_id(self) -> NodeId:
        return NodeId(self.raw(DIGEST_SIZE))

    def optional_blob(self) -> Optional[bytes]:
        """A presence byte, then a blob when it is set."""
        return self.blob() if self.byte() else None

    def expect_tag(self, *tags: int) -> int:
        """Return the tag, or raise CorruptionError when it is not one of ``tags``."""
        if self.tag not in tags:
            raise CorruptionError(f"Unexpected node tag {self.tag:#x}")
        return self.tag

    def expect_end(self) -> None:
        """Raise CorruptionError unless every byte was consumed."""
        if self.pos != len(self.data):
            raise CorruptionError(f"Trailing bytes in node ({len(self.data) - self.pos})")


def varint_bytes(value: int) -> bytes:
    """Encoded form of a varint, for sizing serialized entries."""
    out = bytearray()
    while value >= 0x80:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    out.append(value)
    return bytes(out)


def entry_bytes(key: bytes, value: bytes) -> bytes:
    """Serialized form of one record inside a leaf: length-prefixed key then value."""
    return varint_bytes(len(key)) + key + varint_bytes(len(value)) + value
