"""Benchmark experiment configuration."""

from dataclasses import dataclass, replace
from typing import Optional

from .errors import UsageError
from .index import MbtMeta, MptMeta, MvmbMeta, PosMeta, StructureKind, StructureMeta
from .workload_spec import WorkloadSpec

ALL_STRUCTURES = (
    StructureKind.MPT,
    StructureKind.MBT,
    StructureKind.POS,
    StructureKind.MVMB,
)

DEFAULT_MBT_BUCKETS = 1024
DEFAULT_MBT_FANOUT = 4
DEFAULT_POS_NODE_BYTES = 1024
DEFAULT_POS_WINDOW = 67
DEFAULT_MVMB_ORDER = 5
MVMB_NODE_BYTES = 1024
# Two length prefixes per encoded leaf entry.
ENTRY_OVERHEAD = 4

# Structure parameter -> the only structure it configures.
STRUCTURE_PARAMS = {
    "mbt_buckets": StructureKind.MBT,
    "mbt_fanout": StructureKind.MBT,
    "pos_node_bytes": StructureKind.POS,
    "pos_window": StructureKind.POS,
    "mvmb_order": StructureKind.MVMB,
}


def _given(value: Optional[int], default: int) -> int:
    return default if value is None else value


def check_structure_params(structures: tuple[StructureKind, ...], values: dict) -> None:
    """Reject structure parameters set for a structure that is not selected."""
    for name, kind in STRUCTURE_PARAMS.items():
        if values.get(name) is not None and kind not in structures:
            flag = "--" + name.replace("_", "-")
            raise UsageError(f"{flag} only applies to the {kind.value} structure, which is not selected")


def structure_meta(
    kind: StructureKind,
    mbt_buckets: Optional[int] = None,
    mbt_fanout: Optional[int] = None,
    pos_node_bytes: Optional[int] = None,
    pos_window: Optional[int] = None,
    mvmb_order: Optional[int] = None,
    mean_entry_bytes: Optional[float] = None,
    ablate_si: bool = False,
) -> StructureMeta:
    """Parameters for ``kind``; unset values take the defaults.

    Without an explicit order, MVMB nodes are sized to roughly 1 KiB for
    entries of ``mean_entry_bytes``.
    """
    if kind is StructureKind.MBT:
        return MbtMeta(
            capacity=_given(mbt_buckets, DEFAULT_MBT_BUCKETS),
            fanout=_given(mbt_fanout, DEFAULT_MBT_FANOUT),
        )
    if kind is StructureKind.POS:
        meta = PosMeta.for_node_bytes(
            _given(pos_node_bytes, DEFAULT_POS_NODE_BYTES),
            _given(pos_window, DEFAULT_POS_WINDOW),
        )
        return meta.ablated() if ablate_si else meta
    if kind is StructureKind.MVMB:
        if mvmb_order is not None:
            return MvmbMeta(order=mvmb_order)
        if mean_entry_bytes:
            return MvmbMeta.for_node_bytes(MVMB_NODE_BYTES, round(mean_entry_bytes))
        return MvmbMeta(order=DEFAULT_MVMB_ORDER)
    return MptMeta()


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one bench subcommand needs to run deterministically."""

    subcommand: str
    structures: tuple[StructureKind, ...] = ALL_STRUCTURES
    n_values: tuple[int, ...] = (10000,)
    thetas: tuple[float, ...] = (0.0,)
    write_ratios: tuple[float, ...] = (0.0,)
    batch_sizes: tuple[int, ...] = (2000,)
    overlaps: tuple[float, ...] = (0.5,)
    alphas: tuple[float, ...] = (0.1,)
    deltas: tuple[int, ...] = (1, 10, 100, 1000)
    versions: int = 2
    groups: int = 10
    n_ops: int = 10000
    seed: int = 42
    repetitions: int = 5
    readers: int = 1
    mode: str = "overlap"
    scenario: str = "update"
    key_len_min: int = 5
    key_len_max: int = 15
    value_len_mean: int = 256
    key_charset: str = "alnum"
    mbt_buckets: Optional[int] = None
    mbt_fanout: Optional[int] = None
    pos_node_bytes: Optional[int] = None
    pos_window: Optional[int] = None
    mvmb_order: Optional[int] = None
    ablate_si: bool = False
    ablate_ri: bool = False
    pos_node_sizes: tuple[int, ...] = (512, 1024, 2048, 4096)
    mbt_bucket_counts: tuple[int, ...] = (4000, 6000, 8000, 10000)
    mpt_key_mins: tuple[int, ...] = (5, 9, 13)

    VALID_SUBCOMMANDS = (
        "throughput",
        "latency",
        "storage",
        "dedup",
        "params",
        "diffbench",
    )
    VALID_MODES = ("overlap", "alpha", "batch")
    VALID_SCENARIOS = ("update", "insert")

    def __post_init__(self):
        """Validate fields after initialization."""
        if self.subcommand not in self.VALID_SUBCOMMANDS:
            raise UsageError(
                f"Invalid subcommand: {self.subcommand}. "
                f"Must be one of {self.VALID_SUBCOMMANDS}"
            )
        if not self.structures:
            raise UsageError("At least one structure is required")
        if self.mode not in self.VALID_MODES:
            raise UsageError(
                f"Invalid mode: {self.mode}. Must be one of {self.VALID_MODES}"
            )
        if self.scenario not in self.VALID_SCENARIOS:
            raise UsageError(
                f"Invalid scenario: {self.scenario}. Must be one of {self.VALID_SCENARIOS}"
            )
        if any(n < 0 for n in self.n_values):
            raise UsageError(f"Invalid record counts: {self.n_values}")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas + self.overlaps):
            raise UsageError("Ratios must lie in [0, 1]")
        if self.versions < 0 or self.repetitions < 1 or self.readers < 1:
            raise UsageError("versions must be >= 0, repetitions and readers >= 1")
        if self.ablate_si and set(self.structures) != {StructureKind.POS}:
            raise UsageError("--ablate-si only applies to the pos structure")
        check_structure_params(self.structures, {name: getattr(self, name) for name in STRUCTURE_PARAMS})
        # Meta objects validate the structure parameters.
        for kind in (StructureKind.MBT, StructureKind.MVMB):
            self.meta_for(kind)
        node_bytes = _given(self.pos_node_bytes, DEFAULT_POS_NODE_BYTES)
        window = _given(self.pos_window, DEFAULT_POS_WINDOW)
        if node_bytes < 2 * window:
            raise UsageError(
                f"Invalid POS node size: {node_bytes}. Must be at least twice the window ({window})"
            )

    @property
    def mean_entry_bytes(self) -> float:
        """Expected encoded size of one record."""
        return (self.key_len_min + self.key_len_max) / 2 + self.value_len_mean + ENTRY_OVERHEAD

    def meta_for(self, kind: StructureKind, **overrides) -> StructureMeta:
        """Structure parameters for ``kind``, honoring the ablation flags.

        ``capacity`` and ``node_bytes`` overrides serve the parameter sweeps.
        """
        return structure_meta(
            kind,
            mbt_buckets=overrides.get("capacity", self.mbt_buckets),
            mbt_fanout=self.mbt_fanout,
            pos_node_bytes=overrides.get("node_bytes", self.pos_node_bytes),
            pos_window=self.pos_window,
            mvmb_order=self.mvmb_order,
            mean_entry_bytes=self.mean_entry_bytes,
            ablate_si=self.ablate_si,
        )

    def workload(self, n_records: int, **overrides) -> WorkloadSpec:
        """Workload parameters for ``n_records`` records under this experiment's seed."""
        spec = WorkloadSpec(
            n_records=n_records,
            key_len_min=self.key_len_min,
            key_len_max=self.key_len_max,
            value_len_mean=self.value_len_mean,
            key_charset=self.key_charset,
            groups=self.groups,
            n_ops=self.n_ops,
            seed=self.seed,
        )
        return replace(spec, **overrides)

    def to_dict(self) -> dict:
        """Convert to dictionary for JSON serialization."""
        data = {name: getattr(self, name) for name in self.__dataclass_fields__}
        data["structures"] = [k.value for k in self.structures]
        return data
