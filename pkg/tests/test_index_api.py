"""Behaviour shared by all four index structures."""

import numpy as np
import pytest

from models.errors import AbsentKeyError, CorruptionError, UsageError
from models.index import Entry, MergeStrategy, Proof, RootHandle, StructureKind, Trace
from models.node import NodeId
from models.workload_spec import WorkloadSpec
from services.managers import verify_proof
from services.metrics import measure
from services.workload import Xoshiro256, gen_dataset
from tests.conftest import make_entries, shuffled, small_meta


def test_empty_index(index):
    handle = index.empty()
    assert index.lookup(handle, b"missing") is None
    assert index.count(handle) == 0
    assert index.entries(handle) == []


def test_insert_keeps_old_versions(index, entries):
    v0 = index.put_batch(index.empty(), entries[:100])
    v1 = index.insert(v0, b"new-key", b"new-value")
    v2 = index.insert(v1, entries[0].key, b"changed")

    assert index.lookup(v0, b"new-key") is None
    assert index.lookup(v1, b"new-key") == b"new-value"
    assert index.lookup(v1, entries[0].key) == entries[0].value
    assert index.lookup(v2, entries[0].key) == b"changed"
    assert index.count(v0) == 100
    assert index.count(v2) == 101


def check_against_sorted_map(index, seed: int, steps: int, n_keys: int) -> None:
    """Random inserts, removes and batches, each followed by a lookup compared with a dict."""
    rng = Xoshiro256(seed)
    keys = [e.key for e in make_entries(n_keys, seed=seed + 1)]
    model: dict[bytes, bytes] = {}
    handle = index.empty()
    for step in range(steps):
        key = keys[rng.below(len(keys))]
        roll = rng.below(10)
        if roll < 5:
            value = b"v%d" % step
            handle = index.insert(handle, key, value)
            model[key] = value
        elif roll < 8:
            handle = index.remove(handle, key)
            model.pop(key, None)
        else:
            batch = {keys[rng.below(len(keys))]: b"b%d" % step for _ in range(8)}
            handle = index.put_batch(handle, [Entry(k, v) for k, v in batch.items()])
            model.update(batch)
        assert index.lookup(handle, key) == model.get(key)
    assert index.entries(handle) == [Entry(k, v) for k, v in sorted(model.items())]
    index.validate(handle)


def test_matches_sorted_map(index):
    check_against_sorted_map(index, seed=11, steps=600, n_keys=120)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_matches_sorted_map_at_scale(index, seed):
    check_against_sorted_map(index, seed=seed, steps=10_000, n_keys=2000)


def test_remove_absent_key_keeps_root(index, entries):
    handle = index.put_batch(index.empty(), entries[:50])
    assert index.remove(handle, b"not-there").root == handle.root


def test_rewriting_same_value_keeps_root(index, entries):
    handle = index.put_batch(index.empty(), entries[:50])
    again = index.insert(handle, entries[10].key, entries[10].value)
    assert again.root == handle.root


def test_remove_everything_returns_empty_digest(index, entries):
    handle = index.put_batch(index.empty(), entries[:40])
    for entry in shuffled(entries[:40], 5):
        handle = index.remove(handle, entry.key)
    assert handle.root == index.empty().root
    assert index.count(handle) == 0


def test_empty_batch_returns_same_handle(index, entries):
    handle = index.put_batch(index.empty(), entries[:10])
    assert index.put_batch(handle, []) is handle


def test_duplicate_keys_in_batch_rejected(index):
    with pytest.raises(UsageError):
        index.put_batch(index.empty(), [Entry(b"k", b"1"), Entry(b"k", b"2")])


def test_foreign_handle_rejected(index, manager):
    other_kind = StructureKind.MBT if index.kind is not StructureKind.MBT else StructureKind.MPT
    foreign = manager.get(other_kind, small_meta(other_kind)).empty()
    with pytest.raises(UsageError):
        index.lookup(foreign, b"k")


def test_dangling_root_is_corruption(index):
    handle = RootHandle(kind=index.kind, root=NodeId(b"\x01" * 32), meta=index.meta)
    with pytest.raises(CorruptionError):
        index.lookup(handle, b"k")


def insertion_order_digests(index, records: list[Entry], orders: int) -> set:
    """Root digests after inserting ``records`` in several random orders, plus one bulk build."""
    digests = set()
    for seed in range(orders):
        handle = index.empty()
        for entry in shuffled(records, seed):
            handle = index.insert(handle, entry.key, entry.value)
        # Remove and re-insert a few records as noise.
        for entry in shuffled(records, seed + 100)[: max(20, len(records) // 20)]:
            handle = index.remove(handle, entry.key)
            handle = index.insert(handle, entry.key, entry.value)
        digests.add(handle.root)
    digests.add(index.put_batch(index.empty(), records).root)
    return digests


def test_structural_invariance(siri_index):
    assert len(insertion_order_digests(siri_index, make_entries(400, seed=21), 5)) == 1


@pytest.mark.slow
def test_structural_invariance_at_scale(manager):
    records = make_entries(2000, seed=22)
    for kind in (StructureKind.MPT, StructureKind.MBT, StructureKind.POS):
        index = manager.get(kind, small_meta(kind))
        assert len(insertion_order_digests(index, records, 50)) == 1
    mvmb = manager.get(StructureKind.MVMB, small_meta(StructureKind.MVMB))
    assert len(insertion_order_digests(mvmb, records, 50)) > 1


def test_mvmb_layout_depends_on_order(manager):
    tree = manager.get(StructureKind.MVMB, small_meta(StructureKind.MVMB))
    records = make_entries(16, seed=2)
    handles = []
    for order in (sorted(records, key=lambda e: e.key), sorted(records, key=lambda e: e.key, reverse=True)):
        handle = tree.empty()
        for entry in order:
            handle = tree.insert(handle, entry.key, entry.value)
        handles.append(handle)
    for seed in range(4):
        handle = tree.empty()
        for entry in shuffled(records, seed):
            handle = tree.insert(handle, entry.key, entry.value)
        handles.append(handle)
    assert len({h.root for h in handles}) > 1
    assert all(tree.entries(h) == tree.entries(handles[0]) for h in handles)


def test_diff_reports_changes(index, entries):
    a = index.put_batch(index.empty(), entries[:200])
    b = index.remove(a, entries[0].key)
    b = index.insert(b, entries[1].key, b"modified")
    b = index.put_batch(b, entries[200:210])

    result = index.diff(a, b)
    assert result.only_in_a == [entries[0]]
    assert result.only_in_b == sorted(entries[200:210], key=lambda e: e.key)
    assert result.modified == [(entries[1].key, entries[1].value, b"modified")]

    reverse = index.diff(b, a)
    assert reverse.only_in_a == result.only_in_b
    assert reverse.only_in_b == result.only_in_a


def test_diff_of_identical_roots_visits_one_node(index, entries):
    handle = index.put_batch(index.empty(), entries)
    trace = Trace()
    assert index.diff(handle, handle, trace).is_empty
    assert trace.visits == 1


def test_diff_against_empty(index, entries):
    handle = index.put_batch(index.empty(), entries[:30])
    result = index.diff(index.empty(), handle)
    assert result.only_in_b == sorted(entries[:30], key=lambda e: e.key)
    assert not result.only_in_a and not result.modified


def test_merge_strategies(index, entries):
    base = index.put_batch(index.empty(), entries[:50])
    a = index.insert(base, entries[0].key, b"from-a")
    b = index.insert(base, entries[0].key, b"from-b")
    b = index.insert(b, b"only-b", b"x")

    aborted = index.merge(a, b)
    assert not aborted.ok
    assert aborted.conflicts == [(entries[0].key, b"from-a", b"from-b")]

    kept = index.merge(a, b, MergeStrategy.TAKE_A)
    assert index.lookup(kept.root, entries[0].key) == b"from-a"
    assert index.lookup(kept.root, b"only-b") == b"x"

    taken = index.merge(a, b, MergeStrategy.TAKE_B)
    assert index.lookup(taken.root, entries[0].key) == b"from-b"


def test_proofs_verify_and_reject_tampering(index, entries):
    handle = index.put_batch(index.empty(), entries)
    digest = handle.root
    for entry in entries[::25]:
        proof = index.prove(handle, entry.key)
        assert index.verify(digest, entry.key, entry.value, proof)
        assert verify_proof(index.kind, index.meta, digest, entry.key, entry.value, proof)
        assert not index.verify(digest, entry.key, entry.value + b"!", proof)

        flipped_digest = bytes([digest[0] ^ 1]) + digest[1:]
        assert not index.verify(flipped_digest, entry.key, entry.value, proof)

        last = bytearray(proof.path_nodes[-1])
        last[len(last) // 2] ^= 0x40
        tampered = Proof(proof.path_nodes[:-1] + (bytes(last),))
        assert not index.verify(digest, entry.key, entry.value, tampered)

        assert not index.verify(digest, entry.key, entry.value, Proof(proof.path_nodes[:-1]))
        assert not index.verify(digest, entry.key, entry.value, Proof(()))


def test_prove_absent_key(index, entries):
    handle = index.put_batch(index.empty(), entries[:20])
    with pytest.raises(AbsentKeyError):
        index.prove(handle, b"absent")


def test_proof_length_is_path_length(index, entries):
    handle = index.put_batch(index.empty(), entries)
    key = entries[42].key
    assert len(index.prove(handle, key)) == index.path_length(handle, key)


def test_height_and_node_count(index, entries):
    handle = index.put_batch(index.empty(), entries)
    assert index.height(handle) >= 2
    assert index.node_count(handle) >= index.height(handle)
    assert index.path_length(handle, entries[0].key) <= index.height(handle)


def test_recursive_identity_ablation_shares_nothing(index, entries):
    base = index.put_batch(index.empty(), entries[:100])
    ablated = index.with_recursive_identity_disabled(base)
    v1 = index.insert(ablated, b"k1", b"1")
    v2 = index.insert(v1, b"k2", b"2")
    assert index.lookup(v2, b"k1") == b"1"
    assert index.count(v2) == 102
    report = measure(index.store, [v1, v2])
    assert report.dedup_ratio == 0.0
    assert report.node_sharing_ratio == 0.0


def test_single_insert_writes_few_nodes(index, entries):
    handle = index.put_batch(index.empty(), entries)
    trace = Trace()
    index.insert(handle, b"zz-fresh-key", b"value", trace)
    assert 1 <= trace.nodes_written <= 3 * index.height(handle) + 3


def test_merge_with_itself(index, entries):
    handle = index.put_batch(index.empty(), entries[:50])
    outcome = index.merge(handle, handle)
    assert outcome.ok
    assert outcome.root.root == handle.root


def test_diff_after_single_insert(index, entries):
    base = index.put_batch(index.empty(), entries[:50])
    grown = index.insert(base, b"extra", b"v")
    result = index.diff(grown, base)
    assert result.only_in_a == [Entry(b"extra", b"v")]
    assert not result.only_in_b and not result.modified


def test_random_bit_flips_never_verify(index, entries):
    handle = index.put_batch(index.empty(), entries)
    digest = handle.root
    rng = Xoshiro256(99)

    def flip(data: bytes) -> bytes:
        out = bytearray(data)
        out[rng.below(len(out))] ^= 1 << rng.below(8)
        return bytes(out)

    for _ in range(250):
        entry = entries[rng.below(len(entries))]
        proof = index.prove(handle, entry.key)
        assert not index.verify(flip(digest), entry.key, entry.value, proof)
        assert not index.verify(digest, flip(entry.key), entry.value, proof)
        assert not index.verify(digest, entry.key, flip(entry.value), proof)
        nodes = list(proof.path_nodes)
        i = rng.below(len(nodes))
        nodes[i] = flip(nodes[i])
        assert not index.verify(digest, entry.key, entry.value, Proof(tuple(nodes)))


def test_merge_is_symmetric_under_swapped_strategy(siri_index, entries):
    base = siri_index.put_batch(siri_index.empty(), entries[:150])
    a = siri_index.put_batch(base, [Entry(e.key, b"a" + e.value) for e in entries[:20]] + entries[150:170])
    b = siri_index.put_batch(base, [Entry(e.key, b"b" + e.value) for e in entries[10:30]] + entries[170:190])
    b = siri_index.remove(b, entries[100].key)

    ab = siri_index.merge(a, b, MergeStrategy.TAKE_A)
    ba = siri_index.merge(b, a, MergeStrategy.TAKE_B)
    assert ab.ok and ba.ok
    assert ab.root.root == ba.root.root
    assert siri_index.entries(ab.root) == siri_index.entries(ba.root)


def test_disjoint_merge_equals_union_build(siri_index, entries):
    left, right = entries[:120], entries[120:]
    a = siri_index.put_batch(siri_index.empty(), left)
    b = siri_index.put_batch(siri_index.empty(), right)
    outcome = siri_index.merge(a, b)
    assert outcome.ok
    assert outcome.root.root == siri_index.put_batch(siri_index.empty(), entries).root


def mean_visits(index, handle, records: list[Entry]) -> float:
    return float(np.mean([index.path_length(handle, e.key) for e in records[:500]]))


@pytest.mark.slow
def test_visit_bounds_at_scale(manager):
    sizes = (10_000, 40_000, 160_000)
    datasets = {n: gen_dataset(WorkloadSpec(n_records=n, value_len_mean=16, seed=n)) for n in sizes}

    mbt = manager.get(StructureKind.MBT)
    for n in sizes:
        handle = mbt.put_batch(mbt.empty(), datasets[n])
        assert mean_visits(mbt, handle, datasets[n]) == mbt.depth + 1

    for kind in (StructureKind.POS, StructureKind.MVMB):
        index = manager.get(kind)
        small, large = (
            mean_visits(index, index.put_batch(index.empty(), datasets[n]), datasets[n]) for n in (sizes[0], sizes[-1])
        )
        assert large <= 2 * small

    spec = WorkloadSpec(
        n_records=sizes[-1], key_len_min=32, key_len_max=32, key_charset="binary", value_len_mean=16, seed=3
    )
    records = gen_dataset(spec)
    trie, pos = manager.get(StructureKind.MPT), manager.get(StructureKind.POS)
    trie_visits = mean_visits(trie, trie.put_batch(trie.empty(), records), records)
    pos_visits = mean_visits(pos, pos.put_batch(pos.empty(), records), records)
    assert trie_visits > pos_visits


@pytest.mark.slow
def test_single_insert_writes_at_scale(manager):
    records = make_entries(10_000, seed=31)
    fresh = make_entries(200, seed=32)
    for kind in (StructureKind.MPT, StructureKind.MBT, StructureKind.MVMB):
        index = manager.get(kind)
        handle = index.put_batch(index.empty(), records)
        height = index.height(handle)
        for entry in fresh:
            trace = Trace()
            index.insert(handle, entry.key + b"~", entry.value, trace)
            if kind is StructureKind.MBT:
                assert trace.nodes_written == index.depth + 1
            else:
                assert trace.nodes_written <= height + 3
