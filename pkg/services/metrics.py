"""Deduplication measurement and the closed-form predictions it is compared against."""

import logging
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from models.index import Entry, MbtMeta, RootHandle, StructureKind
from models.node import NodeId
from models.reports import DedupReport, TheoryParams

from .index_api import PersistentIndex
from .managers import index_type
from .node_store import NodeStore
from .workload import gen_alpha_versions

log = logging.getLogger(__name__)


def reachable(store: NodeStore, handle: RootHandle) -> dict[NodeId, int]:
    """Every node reachable from ``handle`` mapped to its serialized size."""
    if handle.root is None:
        return {}
    child_ids = index_type(handle.kind).child_ids
    sizes: dict[NodeId, int] = {}
    stack = [handle.root]
    while stack:
        node_id = stack.pop()
        if node_id in sizes:
            continue
        data = store.require(node_id)
        sizes[node_id] = len(data)
        stack.extend(c for c in child_ids(data) if c not in sizes)
    return sizes


def measure(store: NodeStore, roots: Sequence[RootHandle]) -> DedupReport:
    """Compare the union of the versions' node sets with the sum of their sizes."""
    union: dict[NodeId, int] = {}
    sum_bytes = 0
    sum_nodes = 0
    for handle in roots:
        nodes = reachable(store, handle)
        sum_bytes += sum(nodes.values())
        sum_nodes += len(nodes)
        union.update(nodes)
    report = DedupReport(
        union_bytes=sum(union.values()),
        sum_bytes=sum_bytes,
        union_nodes=len(union),
        sum_nodes=sum_nodes,
    )
    log.debug("Measured %d versions: %s", len(roots), report)
    return report


def predict_dedup(kind: StructureKind, params: TheoryParams) -> Optional[float]:
    """Closed-form dedup ratio between two versions differing in a contiguous ``alpha`` share.

    MVMB has no closed form: its layout depends on the edit history.
    """
    alpha = params.alpha
    if kind in (StructureKind.MBT, StructureKind.POS):
        return 0.5 - alpha / 2
    if kind is StructureKind.MPT:
        c = params.hash_bytes
        r = params.record_bytes
        changed = params.max_key_len * c + r
        whole = r + params.mean_key_len * c
        return 0.5 - alpha * changed / (2 * whole)
    return None


def predict_bucket_dedup(params: TheoryParams) -> float:
    """Bucket-tree prediction that accounts for hashed placement.

    Each record changes with probability alpha and lands in a random bucket,
    so a bucket survives with probability (1 - 1/B)^delta; weighting by bucket
    size leaves (1 - alpha) * (1 - 1/B)^delta of the bytes untouched.
    """
    untouched = (1.0 - params.alpha) * float(np.power(1.0 - 1.0 / params.b, params.delta))
    return 0.5 - (1.0 - untouched) / 2


def theory_params(entries: Sequence[Entry], delta: int, meta: Optional[MbtMeta] = None) -> TheoryParams:
    """Model inputs measured from a record set."""
    key_lens = np.fromiter((len(e.key) for e in entries), dtype=np.int64, count=len(entries))
    record_lens = np.fromiter(
        (len(e.key) + len(e.value) for e in entries), dtype=np.int64, count=len(entries)
    )
    meta = meta or MbtMeta()
    return TheoryParams(
        n=max(1, len(entries)),
        delta=delta,
        b=meta.capacity,
        m=meta.fanout,
        max_key_len=float(key_lens.max()) if len(entries) else 1.0,
        mean_key_len=float(key_lens.mean()) if len(entries) else 1.0,
        record_bytes=float(record_lens.mean()) if len(entries) else 1.0,
    )


def continuous_differential(
    index: PersistentIndex,
    dataset: Sequence[Entry],
    alpha: float,
    n_versions: int = 2,
    scenario: str = "update",
    seed: int = 42,
) -> DedupReport:
    """Build ``n_versions`` versions, each changing a contiguous ``alpha`` share of the previous one."""
    handle = index.put_batch(index.empty(), dataset)
    roots = [handle]
    for batch in gen_alpha_versions(list(dataset), alpha, n_versions, scenario, seed):
        handle = index.put_batch(handle, batch)
        roots.append(handle)
    report = measure(index.store, roots)
    delta = int(round(alpha * len(dataset)))
    meta = index.meta if isinstance(index.meta, MbtMeta) else None
    params = theory_params(dataset, delta, meta)
    if index.kind is StructureKind.MBT:
        predicted = predict_bucket_dedup(params)
    else:
        predicted = predict_dedup(index.kind, params)
    return replace(report, predicted_ratio=predicted)
