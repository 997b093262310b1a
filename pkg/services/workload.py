"""Deterministic synthetic workloads: datasets, Zipfian operation streams,
overlapping group workloads and alpha-changed version sequences.

Scalar decisions come from a seeded xoshiro256** stream; bulk payload bytes
come from a numpy generator seeded off that stream, so a seed fixes every
output exactly.
"""

import base64
import logging
import string
from dataclasses import replace
from pathlib import Path
from typing import MutableSequence, Sequence, TypeVar, Union

import numpy as np

from models.errors import UsageError
from models.index import MAX_KEY_BYTES, Entry
from models.workload_spec import Operation, WorkloadSpec

log = logging.getLogger(__name__)

T = TypeVar("T")

_MASK64 = (1 << 64) - 1

_ALNUM = (string.digits + string.ascii_letters).encode()
_PRINTABLE = _ALNUM + b"+/"
_ALNUM_TABLE = bytes(_ALNUM[i % len(_ALNUM)] for i in range(256))
_PRINTABLE_TABLE = bytes(_PRINTABLE[i % len(_PRINTABLE)] for i in range(256))

# Stream separators so datasets, operations and versions do not share draws.
_OPS_SALT = 0x6F7073
_VERSIONS_SALT = 0x76657273
_GROUPS_SALT = 0x67727073


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: (next state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** seeded through splitmix64."""

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        state = seed & _MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words

    def next_u64(self) -> int:
        """Next 64-bit output."""
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise UsageError(f"Empty range: {n}")
        return (self.next_u64() * n) >> 64

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.below(hi - lo + 1)

    def shuffle(self, items: MutableSequence[T]) -> None:
        """Fisher-Yates shuffle in place."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self) -> "Xoshiro256":
        """Independent generator seeded from this stream."""
        return Xoshiro256(self.next_u64())

    def numpy(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.next_u64()))


class ZipfianGenerator:
    """YCSB-style Zipfian ranks over [0, n); theta = 0 is uniform."""

    def __init__(self, n: int, theta: float, rng: Xoshiro256):
        if n < 1:
            raise UsageError("Zipfian generator needs at least one item")
        if not 0.0 <= theta < 1.0:
            raise UsageError(f"Invalid zipf theta: {theta}. Must be in [0, 1)")
        self.n = n
        self.theta = theta
        self.rng = rng
        ranks = np.arange(1, n + 1, dtype=np.float64)
        self.zetan = float(np.sum(ranks ** -theta))
        self.zeta2 = 1.0 + 0.5**theta
        self.alpha = 1.0 / (1.0 - theta)
        if n > 2:
            self.eta = (1.0 - (2.0 / n) ** (1.0 - theta)) / (1.0 - self.zeta2 / self.zetan)
        else:
            self.eta = 1.0

    def next(self) -> int:
        if self.n == 1:
            return 0
        if self.theta == 0.0:
            return self.rng.below(self.n)
        u = self.rng.random()
        uz = u * self.zetan
        if uz < 1.0:
            return 0
        if uz < self.zeta2:
            return 1
        rank = int(self.n * (self.eta * u - self.eta + 1.0) ** self.alpha)
        return min(rank, self.n - 1)


def _render(raw: bytes, charset: str) -> bytes:
    return raw if charset == "binary" else raw.translate(_ALNUM_TABLE)


def random_values(count: int, mean_len: int, rng: Xoshiro256) -> list[bytes]:
    """Printable values with lengths uniform in [mean/2, 3*mean/2]."""
    lo = mean_len // 2
    hi = mean_len + mean_len // 2
    lengths = [rng.randint(lo, hi) for _ in range(count)]
    payload = rng.numpy().integers(0, 256, size=sum(lengths), dtype=np.uint8).tobytes()
    payload = payload.translate(_PRINTABLE_TABLE)
    values = []
    pos = 0
    for length in lengths:
        values.append(payload[pos : pos + length])
        pos += length
    return values


def gen_dataset(spec: WorkloadSpec) -> list[Entry]:
    """``spec.n_records`` records with unique keys, in generation order.

    Each key is cut from a fresh ``key_len_max``-byte draw, so changing only
    ``key_len_min`` keeps every key's prefix.
    """
    rng = Xoshiro256(spec.seed)
    key_bytes = rng.numpy()
    key_lengths = rng.spawn()
    value_rng = rng.spawn()
    keys: list[bytes] = []
    seen: set[bytes] = set()
    while len(keys) < spec.n_records:
        block = key_bytes.integers(
            0, 256, size=(spec.n_records - len(keys), spec.key_len_max), dtype=np.uint8
        )
        for row in block:
            length = key_lengths.randint(spec.key_len_min, spec.key_len_max)
            key = _render(row[:length].tobytes(), spec.key_charset)
            if key in seen:
                continue
            seen.add(key)
            keys.append(key)
    values = random_values(len(keys), spec.value_len_mean, value_rng)
    log.debug("Generated %d records (seed %d)", len(keys), spec.seed)
    return [Entry(k, v) for k, v in zip(keys, values)]


def gen_ops(spec: WorkloadSpec, dataset: Sequence[Entry]) -> list[list[Operation]]:
    """``spec.n_ops`` reads and writes over ``dataset`` keys, grouped in batches.

    Keys follow a Zipfian popularity over the dataset order; exactly
    ``round(write_ratio * n_ops)`` operations are writes.
    """
    if not dataset or spec.n_ops == 0:
        return []
    rng = Xoshiro256(spec.seed ^ _OPS_SALT)
    zipf = ZipfianGenerator(len(dataset), spec.zipf_theta, rng.spawn())
    n_writes = int(round(spec.write_ratio * spec.n_ops))
    flags = [True] * n_writes + [False] * (spec.n_ops - n_writes)
    rng.shuffle(flags)
    values = iter(random_values(n_writes, spec.value_len_mean, rng))
    ops = []
    for is_write in flags:
        key = dataset[zipf.next()].key
        ops.append(Operation("write", key, next(values)) if is_write else Operation("read", key))
    return [ops[i : i + spec.batch_size] for i in range(0, len(ops), spec.batch_size)]


def gen_group_workloads(spec: WorkloadSpec) -> list[list[Entry]]:
    """One record list per group; all groups share ``floor(overlap * n)`` identical records.

    The rest of each group's records is disjoint from every other group's.
    Each list is shuffled with its own stream, so groups apply shared
    records in different orders.
    """
    shared_n = int(spec.overlap_ratio * spec.n_records)
    own_n = spec.n_records - shared_n
    pool = gen_dataset(replace(spec, n_records=shared_n + spec.groups * own_n))
    shared = pool[:shared_n]
    workloads = []
    for g in range(spec.groups):
        own = pool[shared_n + g * own_n : shared_n + (g + 1) * own_n]
        records = shared + own
        Xoshiro256(spec.seed ^ _GROUPS_SALT ^ (g + 1)).shuffle(records)
        workloads.append(records)
    return workloads


def gen_alpha_versions(
    dataset: Sequence[Entry],
    alpha: float,
    n_versions: int,
    scenario: str = "update",
    seed: int = 42,
) -> list[list[Entry]]:
    """Edit batches turning version i-1 into version i, for i in 1..n_versions-1.

    Each batch touches ``round(alpha * size)`` records forming one
    contiguous run of the sorted key order: new values for existing keys
    ("update") or fresh keys sorting right after one anchor key ("insert").
    """
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"Invalid alpha: {alpha}. Must be in [0, 1]")
    if n_versions < 1:
        raise UsageError(f"Invalid version count: {n_versions}. Must be >= 1")
    if scenario not in ("update", "insert"):
        raise UsageError(f"Invalid scenario: {scenario}")
    rng = Xoshiro256(seed ^ _VERSIONS_SALT)
    current = {e.key: e.value for e in dataset}
    mean_len = int(np.mean([len(v) for v in current.values()])) if current else 0
    batches: list[list[Entry]] = []
    for _ in range(1, n_versions):
        keys = sorted(current)
        delta = int(round(alpha * len(keys)))
        if delta == 0:
            batches.append([])
            continue
        values = random_values(delta, mean_len, rng)
        if scenario == "update":
            start = rng.below(len(keys) - delta + 1)
            batch = []
            for key, value in zip(keys[start : start + delta], values):
                if value == current[key]:
                    value += b"+"
                batch.append(Entry(key, value))
        else:
            anchor = keys[rng.below(len(keys))][: MAX_KEY_BYTES - 5]
            batch = []
            counter = 0
            for value in values:
                key = anchor + b"\x00" + counter.to_bytes(4, "big")
                while key in current:
                    counter += 1
                    key = anchor + b"\x00" + counter.to_bytes(4, "big")
                counter += 1
                batch.append(Entry(key, value))
        for entry in batch:
            current[entry.key] = entry.value
        batches.append(batch)
    return batches


def read_records(path: Union[str, Path]) -> list[Entry]:
    """Parse ``key<TAB>base64(value)`` lines; blank lines are skipped."""
    entries = []
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, encoded = line.partition("\t")
        if not sep:
            raise UsageError(f"{path}:{number}: expected key<TAB>value")
        try:
            value = base64.b64decode(encoded, validate=True)
        except ValueError as e:
            raise UsageError(f"{path}:{number}: bad base64 value ({e})") from e
        entries.append(Entry(key.encode("utf-8"), value))
    return entries


def write_records(path: Union[str, Path], entries: Sequence[Entry]) -> None:
    """Write records in the format read by ``read_records``; keys must be UTF-8 without tabs."""
    lines = []
    for entry in entries:
        key = entry.key.decode("utf-8")
        if "\t" in key or "\n" in key:
            raise UsageError(f"Key {entry.key!r} cannot be written as a text line")
        lines.append(f"{key}\t{base64.b64encode(entry.value).decode('ascii')}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def dedupe_writes(ops: Sequence[Operation]) -> list[Entry]:
    """Last write per key wins; the result can go straight into put_batch."""
    latest: dict[bytes, bytes] = {}
    for op in ops:
        if op.is_write:
            latest[op.key] = op.value
    return [Entry(k, v) for k, v in latest.items()]
