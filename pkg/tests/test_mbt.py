import pytest

from models.index import MbtMeta, StructureKind, Trace
from services.mbt import bucket_of, depth_of, level_sizes, mbt_node_counts, path_to
from tests.conftest import make_entries


@pytest.fixture
def tree(manager):
    return manager.get(StructureKind.MBT, MbtMeta(capacity=1024, fanout=4))


def test_static_shape():
    meta = MbtMeta(capacity=1024, fanout=4)
    assert level_sizes(1024, 4) == (1024, 256, 64, 16, 4, 1)
    assert depth_of(meta) == 5
    assert mbt_node_counts(meta) == (341, 1365)
    assert path_to(0, meta) == [0, 0, 0, 0, 0]
    assert path_to(5, meta) == [0, 0, 0, 1, 1]
    assert path_to(1023, meta) == [3, 3, 3, 3, 3]


def test_non_power_capacity_shape():
    assert level_sizes(1000, 4) == (1000, 250, 63, 16, 4, 1)
    assert level_sizes(10, 3) == (10, 4, 2, 1)


@pytest.mark.parametrize(
    "capacity, fanout, internal",
    [(8, 2, 7), (2, 2, 1), (5, 5, 1), (81, 3, 40)],
)
def test_node_counts(capacity, fanout, internal):
    assert mbt_node_counts(MbtMeta(capacity=capacity, fanout=fanout)) == (internal, internal + capacity)


def test_full_tree_has_every_node(manager):
    tree = manager.get(StructureKind.MBT, MbtMeta(capacity=8, fanout=2))
    handle = tree.put_batch(tree.empty(), make_entries(400))
    assert tree.node_count(handle) == mbt_node_counts(tree.meta)[1] == 15


def test_bucket_placement_is_stable():
    meta = MbtMeta(capacity=100, fanout=4)
    buckets = {bucket_of(e.key, meta) for e in make_entries(2000)}
    assert buckets == set(range(100))
    assert bucket_of(b"key", meta) == bucket_of(b"key", meta)


def test_lookup_visits_independent_of_size(tree):
    for n in (200, 3000):
        records = make_entries(n, seed=n)
        handle = tree.put_batch(tree.empty(), records)
        for entry in records[:50]:
            assert tree.path_length(handle, entry.key) == tree.depth + 1
        assert tree.path_length(handle, b"absent") == tree.depth + 1


def test_single_insert_rewrites_one_path(tree):
    handle = tree.put_batch(tree.empty(), make_entries(2000))
    trace = Trace()
    tree.insert(handle, b"fresh", b"value", trace)
    assert trace.nodes_written == tree.depth + 1


def test_empty_tree_shares_identical_nodes(tree):
    assert tree.node_count(tree.empty()) == tree.depth + 1
    assert tree.height(tree.empty()) == tree.depth + 1


def test_non_power_capacity_operations(manager):
    tree = manager.get(StructureKind.MBT, MbtMeta(capacity=1000, fanout=4))
    records = make_entries(500)
    handle = tree.put_batch(tree.empty(), records)
    tree.validate(handle)
    assert all(tree.lookup(handle, e.key) == e.value for e in records)
    assert tree.entries(handle) == sorted(records, key=lambda e: e.key)


def test_batch_touching_one_bucket(tree):
    handle = tree.put_batch(tree.empty(), make_entries(100))
    trace = Trace()
    tree.put_batch(handle, [(b"only", b"1")], trace)
    assert trace.nodes_written == tree.depth + 1
