import pytest

from models.index import MbtMeta, StructureKind
from models.reports import DedupReport, TheoryParams
from models.workload_spec import WorkloadSpec
from services.managers import IndexManager
from services.metrics import (
    continuous_differential,
    measure,
    predict_bucket_dedup,
    predict_dedup,
    reachable,
    theory_params,
)
from services.node_store import NodeStore
from services.workload import gen_dataset
from tests.conftest import make_entries, small_meta


@pytest.mark.parametrize("k", [2, 3, 10])
def test_identical_roots(index, entries, k):
    handle = index.put_batch(index.empty(), entries)
    report = measure(index.store, [handle] * k)
    assert report.dedup_ratio == pytest.approx(1 - 1 / k)
    assert report.node_sharing_ratio == pytest.approx(1 - 1 / k)


def test_matches_brute_force_reachable_set(index):
    records = make_entries(16, seed=1)
    a = index.put_batch(index.empty(), records)
    b = index.insert(a, records[0].key, b"other")

    def brute(handle):
        seen, stack = {}, [handle.root]
        while stack:
            node_id = stack.pop()
            if node_id is None or node_id in seen:
                continue
            data = index.store.get(node_id)
            seen[node_id] = len(data)
            stack.extend(index.child_ids(data))
        return seen

    assert reachable(index.store, a) == brute(a)
    union = {**brute(a), **brute(b)}
    report = measure(index.store, [a, b])
    assert report.union_nodes == len(union)
    assert report.union_bytes == sum(union.values())
    assert report.sum_bytes == sum(brute(a).values()) + sum(brute(b).values())


def test_empty_report():
    report = measure(NodeStore(), [])
    assert report.dedup_ratio == 0.0
    assert report.node_sharing_ratio == 0.0
    assert DedupReport(0, 0, 0, 0).to_dict()["dedup_ratio"] == 0.0


def test_closed_form_predictions():
    params = TheoryParams(n=1000, delta=100, max_key_len=15, mean_key_len=15, record_bytes=266)
    assert predict_dedup(StructureKind.POS, params) == pytest.approx(0.45)
    assert predict_dedup(StructureKind.MBT, params) == pytest.approx(0.45)
    # With every key at the mean length the trie form reduces to the same value.
    assert predict_dedup(StructureKind.MPT, params) == pytest.approx(0.45)
    longer = TheoryParams(n=1000, delta=100, max_key_len=30, mean_key_len=15, record_bytes=266)
    assert predict_dedup(StructureKind.MPT, longer) < 0.45
    assert predict_dedup(StructureKind.MVMB, params) is None


def test_bucket_prediction_limits():
    few = TheoryParams(n=100_000, delta=10, b=1024)
    assert predict_bucket_dedup(few) == pytest.approx(0.5, abs=0.01)
    many = TheoryParams(n=100_000, delta=50_000, b=1024)
    assert predict_bucket_dedup(many) == pytest.approx(0.0, abs=0.01)


def test_theory_params_from_records():
    records = make_entries(200)
    params = theory_params(records, 20, MbtMeta(capacity=512))
    assert params.alpha == pytest.approx(0.1)
    assert params.b == 512
    assert params.max_key_len == max(len(e.key) for e in records)


@pytest.mark.parametrize("kind", [StructureKind.POS, StructureKind.MBT])
@pytest.mark.parametrize("alpha", [0.1, 0.5])
def test_continuous_differential_tracks_prediction(kind, alpha):
    index = IndexManager(NodeStore()).get(kind)
    dataset = gen_dataset(WorkloadSpec(n_records=4000, seed=2))
    report = continuous_differential(index, dataset, alpha)
    assert report.predicted_ratio is not None
    assert report.dedup_ratio == pytest.approx(report.predicted_ratio, abs=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5])
def test_continuous_differential_at_scale(alpha):
    dataset = gen_dataset(WorkloadSpec(n_records=100_000, seed=1))
    for kind in (StructureKind.POS, StructureKind.MBT):
        index = IndexManager(NodeStore()).get(kind)
        report = continuous_differential(index, dataset, alpha)
        assert report.dedup_ratio == pytest.approx(report.predicted_ratio, abs=0.05)
    fixed = gen_dataset(WorkloadSpec(n_records=100_000, key_len_min=12, key_len_max=12, seed=1))
    trie = IndexManager(NodeStore()).get(StructureKind.MPT)
    report = continuous_differential(trie, fixed, alpha)
    assert report.dedup_ratio == pytest.approx(0.5 - alpha / 2, abs=0.07)


def test_recursive_identity_ablation_in_differential():
    index = IndexManager(NodeStore()).get(StructureKind.POS, small_meta(StructureKind.POS))
    dataset = make_entries(300)
    base = index.put_batch(index.empty(), dataset)
    ablated = index.with_recursive_identity_disabled(base)
    versions = [index.insert(ablated, b"a%d" % i, b"x") for i in range(3)]
    assert measure(index.store, versions).dedup_ratio == 0.0
