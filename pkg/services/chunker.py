"""Content-defined chunking with a rolling Rabin fingerprint.

The fingerprint of a window is its bytes read as a polynomial over GF(2)
(big-endian, most significant bit first) reduced modulo an irreducible
polynomial of degree 63. Appending a byte shifts by x^8 and folds the
overflow through a 256-entry table; dropping the oldest byte XORs out its
precomputed contribution.
"""

import logging
from functools import lru_cache

from models.chunk_config import ChunkConfig
from models.node import NodeId

log = logging.getLogger(__name__)

POLYNOMIAL = 0xBFE6B8A5BF378D83
DEGREE = POLYNOMIAL.bit_length() - 1
_SHIFT = DEGREE - 8
_LOW_MASK = (1 << _SHIFT) - 1


def poly_mod(value: int, poly: int = POLYNOMIAL) -> int:
    """Remainder of ``value`` divided by ``poly`` as GF(2) polynomials."""
    degree = poly.bit_length() - 1
    while value.bit_length() - 1 >= degree:
        value ^= poly << (value.bit_length() - 1 - degree)
    return value


@lru_cache(maxsize=None)
def _append_table() -> tuple[int, ...]:
    return tuple(poly_mod(top << DEGREE) for top in range(256))


@lru_cache(maxsize=None)
def _pop_table(window_bytes: int) -> tuple[int, ...]:
    shift = 8 * window_bytes
    return tuple(poly_mod(out << shift) for out in range(256))


def fingerprint(window: bytes) -> int:
    """Fingerprint of ``window`` computed directly, without rolling."""
    return poly_mod(int.from_bytes(window, "big"))


class RollingHash:
    """Fingerprint of the last ``window_bytes`` bytes fed in."""

    __slots__ = ("window_bytes", "value", "_ring", "_pos", "_filled", "_append", "_pop")

    def __init__(self, window_bytes: int):
        self.window_bytes = window_bytes
        self._append = _append_table()
        self._pop = _pop_table(window_bytes)
        self._ring = bytearray(window_bytes)
        self.reset()

    def reset(self) -> None:
        self.value = 0
        self._pos = 0
        self._filled = 0

    @property
    def full(self) -> bool:
        return self._filled >= self.window_bytes

    def roll(self, byte: int) -> int:
        """Append one byte and return the new fingerprint."""
        fp = self.value
        fp = (((fp & _LOW_MASK) << 8) | byte) ^ self._append[fp >> _SHIFT]
        if self._filled >= self.window_bytes:
            fp ^= self._pop[self._ring[self._pos]]
        else:
            self._filled += 1
        self._ring[self._pos] = byte
        self._pos = (self._pos + 1) % self.window_bytes
        self.value = fp
        return fp


def boundaries(data: bytes, cfg: ChunkConfig) -> list[int]:
    """Chunk end offsets for ``data``; the last offset is always ``len(data)``.

    The rolling state restarts after every boundary, so a boundary needs a
    full window of bytes since the previous one.
    """
    n = len(data)
    if n == 0:
        return []
    append = _append_table()
    pop = _pop_table(cfg.window_bytes)
    window = cfg.window_bytes
    mask = cfg.mask
    pattern = cfg.pattern_value
    min_len = max(cfg.min_chunk_bytes, window)
    forced = cfg.forced_split_bytes

    out: list[int] = []
    start = 0
    fp = 0
    for i in range(n):
        fp = (((fp & _LOW_MASK) << 8) | data[i]) ^ append[fp >> _SHIFT]
        length = i + 1 - start
        if length > window:
            fp ^= pop[data[i - window]]
        if (length >= min_len and (fp & mask) == pattern) or length >= forced:
            out.append(i + 1)
            start = i + 1
            fp = 0
    if not out or out[-1] != n:
        out.append(n)
    return out


def hash_matches(node_id: NodeId, cfg: ChunkConfig) -> bool:
    """Whether the low ``pattern_bits`` bits of a digest equal the pattern."""
    return (int.from_bytes(node_id[-8:], "big") & cfg.mask) == cfg.pattern_value


class EntryChunker:
    """Groups a stream of serialized entries into chunks.

    An entry closes the current chunk when the rolling fingerprint matches
    anywhere inside it (after the minimum length) or the chunk has reached
    the forced split size. Cuts only ever fall between entries.
    """

    __slots__ = ("cfg", "_hash", "_length", "_min_len", "_forced")

    def __init__(self, cfg: ChunkConfig):
        self.cfg = cfg
        self._hash = RollingHash(cfg.window_bytes)
        self._min_len = max(cfg.min_chunk_bytes, cfg.window_bytes)
        self._forced = cfg.forced_split_bytes
        self._length = 0

    def reset(self) -> None:
        self._hash.reset()
        self._length = 0

    def feed(self, entry: bytes) -> bool:
        """Feed one serialized entry; True means a chunk ends after it."""
        roll = self._hash.roll
        mask = self.cfg.mask
        pattern = self.cfg.pattern_value
        length = self._length
        matched = False
        for b in entry:
            fp = roll(b)
            length += 1
            if length >= self._min_len and (fp & mask) == pattern:
                matched = True
                break
        else:
            matched = length >= self._forced
        if matched:
            self.reset()
        else:
            self._length = length
        return matched


class DigestChunker:
    """Groups child references of an internal level by their digests.

    A child closes the node when its digest matches the pattern or the node
    has grown to the forced split size; a node always keeps at least two
    children.
    """

    __slots__ = ("cfg", "_count", "_size")

    def __init__(self, cfg: ChunkConfig):
        self.cfg = cfg
        self._count = 0
        self._size = 0

    def reset(self) -> None:
        self._count = 0
        self._size = 0

    def feed(self, node_id: NodeId, item_bytes: int) -> bool:
        """Feed one child reference; True means the node ends after it."""
        self._count += 1
        self._size += item_bytes
        cut = self._count >= 2 and (
            hash_matches(node_id, self.cfg) or self._size >= self.cfg.forced_split_bytes
        )
        if cut:
            self.reset()
        return cut
