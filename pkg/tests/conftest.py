"""Shared fixtures: a fresh store, one small-parameter index per structure, seeded records."""

import pytest

from models.index import Entry, MbtMeta, MptMeta, MvmbMeta, PosMeta, StructureKind
from models.workload_spec import WorkloadSpec
from services.managers import IndexManager
from services.node_store import NodeStore
from services.workload import Xoshiro256, gen_dataset

SIRI_KINDS = [StructureKind.MPT, StructureKind.MBT, StructureKind.POS]


def small_meta(kind: StructureKind):
    """Parameters small enough that a few hundred records give multi-level trees."""
    if kind is StructureKind.MBT:
        return MbtMeta(capacity=64, fanout=4)
    if kind is StructureKind.POS:
        return PosMeta.for_node_bytes(256, 16)
    if kind is StructureKind.MVMB:
        return MvmbMeta(order=4)
    return MptMeta()


def make_entries(n: int, seed: int = 7, value_len: int = 24) -> list[Entry]:
    return gen_dataset(WorkloadSpec(n_records=n, value_len_mean=value_len, seed=seed))


def shuffled(items: list, seed: int) -> list:
    out = list(items)
    Xoshiro256(seed).shuffle(out)
    return out


@pytest.fixture
def store() -> NodeStore:
    return NodeStore()


@pytest.fixture
def manager(store) -> IndexManager:
    return IndexManager(store)


@pytest.fixture(params=list(StructureKind), ids=str)
def index(request, manager):
    return manager.get(request.param, small_meta(request.param))


@pytest.fixture(params=SIRI_KINDS, ids=str)
def siri_index(request, manager):
    return manager.get(request.param, small_meta(request.param))


@pytest.fixture
def entries() -> list[Entry]:
    return make_entries(300)
