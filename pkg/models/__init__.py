"""Data models for siri-bench."""

from .chunk_config import ChunkConfig
from .errors import AbsentKeyError, CorruptionError, SiriError, SnapshotError, UsageError
from .experiment import ExperimentConfig
from .index import (
    DiffResult,
    Entry,
    MbtMeta,
    MergeOutcome,
    MergeStrategy,
    MptMeta,
    MvmbMeta,
    PosMeta,
    Proof,
    RootHandle,
    StructureKind,
    Trace,
)
from .node import NodeId, StoreStats
from .reports import DedupReport, TheoryParams
from .workload_spec import Operation, WorkloadSpec

__all__ = [
    "AbsentKeyError",
    "ChunkConfig",
    "CorruptionError",
    "DedupReport",
    "DiffResult",
    "Entry",
    "ExperimentConfig",
    "MbtMeta",
    "MergeOutcome",
    "MergeStrategy",
    "MptMeta",
    "MvmbMeta",
    "NodeId",
    "Operation",
    "PosMeta",
    "Proof",
    "RootHandle",
    "SiriError",
    "SnapshotError",
    "StoreStats",
    "StructureKind",
    "TheoryParams",
    "Trace",
    "UsageError",
    "WorkloadSpec",
]
