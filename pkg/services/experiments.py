"""Benchmark runners behind the ``bench`` subcommands.

Each runner takes an ``ExperimentConfig`` and returns CSV rows as dicts
keyed by ``HEADERS[subcommand]``. Everything except wall-clock columns is
a pure function of the configuration.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from models.errors import UsageError
from models.experiment import ExperimentConfig
from models.index import Entry, RootHandle, StructureKind, Trace
from models.workload_spec import Operation

from .index_api import PersistentIndex
from .managers import IndexManager
from .metrics import continuous_differential, measure
from .node_store import NodeStore
from .workload import Xoshiro256, dedupe_writes, gen_dataset, gen_group_workloads, gen_ops

log = logging.getLogger(__name__)

Row = dict[str, object]

HEADERS: dict[str, list[str]] = {
    "throughput": ["structure", "n", "theta", "write_ratio", "ops_per_sec", "mean_visits"],
    "latency": ["structure", "op", "histogram", "bucket", "count"],
    "storage": ["structure", "n_versions", "total_bytes", "total_nodes"],
    "dedup": [
        "structure",
        "overlap_or_alpha",
        "batch",
        "measured_eta",
        "predicted_eta",
        "sharing_ratio",
    ],
    "params": ["structure", "parameter", "value", "measured_eta", "sharing_ratio"],
    "diffbench": ["structure", "delta", "diff_ms", "visits"],
}


def _ratio(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def _index(cfg: ExperimentConfig, kind: StructureKind, store: NodeStore, **overrides) -> PersistentIndex:
    return IndexManager(store).get(kind, cfg.meta_for(kind, **overrides))


def _load(cfg: ExperimentConfig, index: PersistentIndex, dataset: list[Entry]) -> RootHandle:
    handle = index.put_batch(index.empty(), dataset)
    if cfg.ablate_ri:
        handle = index.with_recursive_identity_disabled(handle)
    return handle


def _run_batch(
    index: PersistentIndex,
    handle: RootHandle,
    batch: list[Operation],
    trace: Trace,
    readers: int,
) -> RootHandle:
    """Reads see the version at the start of the batch; writes then land as one batch."""
    reads = [op.key for op in batch if not op.is_write]
    if readers > 1 and reads:
        def read(key: bytes) -> Trace:
            local = Trace()
            index.lookup(handle, key, local)
            return local

        with ThreadPoolExecutor(max_workers=readers) as pool:
            for local in pool.map(read, reads):
                trace.add(local)
    else:
        for key in reads:
            index.lookup(handle, key, trace)
    writes = dedupe_writes(batch)
    if writes:
        handle = index.put_batch(handle, writes, trace)
    return handle


def run_throughput(cfg: ExperimentConfig) -> list[Row]:
    """Operations per second and mean visits for each structure and workload point."""
    rows = []
    for kind in cfg.structures:
        for n in cfg.n_values:
            for theta in cfg.thetas:
                for write_ratio in cfg.write_ratios:
                    spec = cfg.workload(
                        n,
                        zipf_theta=theta,
                        write_ratio=write_ratio,
                        batch_size=cfg.batch_sizes[0],
                    )
                    dataset = gen_dataset(spec)
                    batches = gen_ops(spec, dataset)
                    total_ops = sum(len(b) for b in batches)
                    rates = []
                    mean_visits = 0.0
                    for rep in range(cfg.repetitions):
                        store = NodeStore()
                        index = _index(cfg, kind, store)
                        handle = _load(cfg, index, dataset)
                        trace = Trace()
                        start = time.perf_counter()
                        for batch in batches:
                            handle = _run_batch(index, handle, batch, trace, cfg.readers)
                        elapsed = time.perf_counter() - start
                        rates.append(total_ops / elapsed if elapsed > 0 and total_ops else 0.0)
                        if rep == 0:
                            mean_visits = trace.visits / total_ops if total_ops else 0.0
                    log.info("throughput %s n=%d theta=%s wr=%s done", kind, n, theta, write_ratio)
                    rows.append(
                        {
                            "structure": kind.value,
                            "n": n,
                            "theta": theta,
                            "write_ratio": write_ratio,
                            "ops_per_sec": f"{float(np.mean(rates)):.1f}",
                            "mean_visits": f"{mean_visits:.4f}",
                        }
                    )
    return rows


def _histogram_rows(kind: StructureKind, op: str, name: str, values: list[int]) -> list[Row]:
    if not values:
        return []
    buckets, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
    return [
        {"structure": kind.value, "op": op, "histogram": name, "bucket": int(b), "count": int(c)}
        for b, c in zip(buckets, counts)
    ]


def run_latency(cfg: ExperimentConfig) -> list[Row]:
    """Per-operation latency (power-of-two microsecond buckets) and path length histograms."""
    rows = []
    for kind in cfg.structures:
        for n in cfg.n_values:
            spec = cfg.workload(
                n,
                zipf_theta=cfg.thetas[0],
                write_ratio=cfg.write_ratios[0],
                batch_size=max(1, cfg.n_ops),
            )
            dataset = gen_dataset(spec)
            ops = [op for batch in gen_ops(spec, dataset) for op in batch]
            store = NodeStore()
            index = _index(cfg, kind, store)
            handle = _load(cfg, index, dataset)
            samples: dict[str, tuple[list[int], list[int]]] = {"read": ([], []), "write": ([], [])}
            for op in ops:
                trace = Trace()
                start = time.perf_counter()
                if op.is_write:
                    handle = index.insert(handle, op.key, op.value, trace)
                else:
                    index.lookup(handle, op.key, trace)
                micros = (time.perf_counter() - start) * 1e6
                latencies, paths = samples[op.kind]
                latencies.append(1 << max(0, int(math.floor(math.log2(max(micros, 1.0))))))
                paths.append(trace.visits)
            for op_kind, (latencies, paths) in samples.items():
                rows.extend(_histogram_rows(kind, op_kind, "latency_us", latencies))
                rows.extend(_histogram_rows(kind, op_kind, "path_length", paths))
    return rows


def run_storage(cfg: ExperimentConfig) -> list[Row]:
    """Union size of the first v versions, for v = 1..versions."""
    rows = []
    batch = cfg.batch_sizes[0]
    for kind in cfg.structures:
        for n in cfg.n_values:
            if cfg.versions == 0:
                rows.append({"structure": kind.value, "n_versions": 0, "total_bytes": 0, "total_nodes": 0})
                continue
            spec = cfg.workload(
                n, write_ratio=1.0, batch_size=batch, n_ops=batch * (cfg.versions - 1)
            )
            dataset = gen_dataset(spec)
            store = NodeStore()
            index = _index(cfg, kind, store)
            handle = _load(cfg, index, dataset)
            roots = [handle]
            for ops in gen_ops(spec, dataset):
                handle = index.put_batch(handle, dedupe_writes(ops))
                roots.append(handle)
            for v in range(1, len(roots) + 1):
                report = measure(store, roots[:v])
                rows.append(
                    {
                        "structure": kind.value,
                        "n_versions": v,
                        "total_bytes": report.union_bytes,
                        "total_nodes": report.union_nodes,
                    }
                )
    return rows


def group_dedup(cfg: ExperimentConfig, kind: StructureKind, n: int, overlap: float, batch: int):
    """Groups start from one shared base and each commit their own workload in batches."""
    store = NodeStore()
    index = _index(cfg, kind, store)
    base = _load(cfg, index, gen_dataset(cfg.workload(n)))
    spec = cfg.workload(cfg.n_ops, overlap_ratio=overlap, seed=cfg.seed + 1)
    roots = []
    for records in gen_group_workloads(spec):
        handle = base
        for i in range(0, len(records), batch):
            handle = index.put_batch(handle, records[i : i + batch])
            roots.append(handle)
    return measure(store, roots)


def run_dedup(cfg: ExperimentConfig) -> list[Row]:
    """Dedup ratios across groups, batch sizes or changed fractions, per ``cfg.mode``."""
    rows = []
    n = cfg.n_values[0]
    for kind in cfg.structures:
        if cfg.mode == "alpha":
            dataset = gen_dataset(cfg.workload(n))
            for alpha in cfg.alphas:
                index = _index(cfg, kind, NodeStore())
                if cfg.ablate_ri:
                    index = _AblatedIndex(index)
                report = continuous_differential(
                    index, dataset, alpha, max(2, cfg.versions), cfg.scenario, cfg.seed
                )
                rows.append(_dedup_row(kind, alpha, "", report.dedup_ratio, report.predicted_ratio, report.node_sharing_ratio))
            continue
        if cfg.mode == "overlap":
            points = [(overlap, cfg.batch_sizes[0]) for overlap in cfg.overlaps]
        else:
            points = [(cfg.overlaps[0], batch) for batch in cfg.batch_sizes]
        for overlap, batch in points:
            log.info("dedup %s overlap=%s batch=%d", kind, overlap, batch)
            report = group_dedup(cfg, kind, n, overlap, batch)
            rows.append(_dedup_row(kind, overlap, batch, report.dedup_ratio, None, report.node_sharing_ratio))
    return rows


def _dedup_row(kind, x, batch, measured, predicted, sharing) -> Row:
    return {
        "structure": kind.value,
        "overlap_or_alpha": x,
        "batch": batch,
        "measured_eta": _ratio(measured),
        "predicted_eta": _ratio(predicted),
        "sharing_ratio": _ratio(sharing),
    }


class _AblatedIndex:
    """Index wrapper whose empty handle copies every node on each write."""

    def __init__(self, index: PersistentIndex):
        self._index = index

    def empty(self) -> RootHandle:
        return self._index.with_recursive_identity_disabled(self._index.empty())

    def __getattr__(self, name: str):
        return getattr(self._index, name)


def _two_version_report(cfg: ExperimentConfig, index: PersistentIndex, dataset: list[Entry], batch: int):
    spec = cfg.workload(len(dataset), write_ratio=1.0, batch_size=batch, n_ops=batch)
    base = _load(cfg, index, dataset)
    handle = base
    for ops in gen_ops(spec, dataset):
        handle = index.put_batch(handle, dedupe_writes(ops))
    return measure(index.store, [base, handle])


def run_params(cfg: ExperimentConfig) -> list[Row]:
    """Dedup ratio as one structure parameter varies; one batch of uniform updates per point."""
    rows = []
    n = cfg.n_values[0]
    batch = cfg.batch_sizes[0]
    sweeps: list[tuple[StructureKind, str, list, Callable]] = []
    if StructureKind.POS in cfg.structures:
        sweeps.append((StructureKind.POS, "node_bytes", list(cfg.pos_node_sizes), lambda v: ({"node_bytes": v}, {})))
    if StructureKind.MBT in cfg.structures:
        sweeps.append((StructureKind.MBT, "buckets", list(cfg.mbt_bucket_counts), lambda v: ({"capacity": v}, {})))
    if StructureKind.MPT in cfg.structures:
        for key_min in cfg.mpt_key_mins:
            if key_min > cfg.key_len_max:
                raise UsageError(f"Minimum key length {key_min} exceeds the maximum {cfg.key_len_max}")
        sweeps.append((StructureKind.MPT, "mean_key_len", list(cfg.mpt_key_mins), lambda v: ({}, {"key_len_min": v})))
    for kind, parameter, values, split in sweeps:
        for value in values:
            meta_overrides, workload_overrides = split(value)
            dataset = gen_dataset(cfg.workload(n, **workload_overrides))
            index = _index(cfg, kind, NodeStore(), **meta_overrides)
            report = _two_version_report(cfg, index, dataset, batch)
            shown = value
            if kind is StructureKind.MPT:
                shown = f"{float(np.mean([len(e.key) for e in dataset])):.2f}" if dataset else "0.00"
            rows.append(
                {
                    "structure": kind.value,
                    "parameter": parameter,
                    "value": shown,
                    "measured_eta": _ratio(report.dedup_ratio),
                    "sharing_ratio": _ratio(report.node_sharing_ratio),
                }
            )
    return rows


def run_diffbench(cfg: ExperimentConfig) -> list[Row]:
    """Diff two versions built independently, in different insertion orders, ``delta`` records apart."""
    rows = []
    n = cfg.n_values[0]
    batch = cfg.batch_sizes[0]
    dataset = gen_dataset(cfg.workload(n))
    for kind in cfg.structures:
        for delta in cfg.deltas:
            if delta > len(dataset):
                raise UsageError(f"Delta {delta} exceeds the dataset size {len(dataset)}")
            rng = Xoshiro256(cfg.seed ^ delta)
            order_a = list(dataset)
            rng.shuffle(order_a)
            changed = {e.key for e in order_a[:delta]}
            order_b = [
                Entry(e.key, e.value + b"~") if e.key in changed else e for e in dataset
            ]
            rng.shuffle(order_b)
            store = NodeStore()
            index = _index(cfg, kind, store)
            a = b = index.empty()
            for i in range(0, len(order_a), batch):
                a = index.put_batch(a, order_a[i : i + batch])
                b = index.put_batch(b, order_b[i : i + batch])
            timings = []
            visits = 0
            for _ in range(cfg.repetitions):
                trace = Trace()
                start = time.perf_counter()
                result = index.diff(a, b, trace)
                timings.append((time.perf_counter() - start) * 1000)
                visits = trace.visits
            if len(result.modified) != delta:
                log.warning("diff found %d changes, expected %d", len(result.modified), delta)
            rows.append(
                {
                    "structure": kind.value,
                    "delta": delta,
                    "diff_ms": f"{float(np.mean(timings)):.3f}",
                    "visits": visits,
                }
            )
    return rows


RUNNERS: dict[str, Callable[[ExperimentConfig], list[Row]]] = {
    "throughput": run_throughput,
    "latency": run_latency,
    "storage": run_storage,
    "dedup": run_dedup,
    "params": run_params,
    "diffbench": run_diffbench,
}


def run(cfg: ExperimentConfig) -> list[Row]:
    """Run the experiment named by ``cfg.subcommand``."""
    return RUNNERS[cfg.subcommand](cfg)
