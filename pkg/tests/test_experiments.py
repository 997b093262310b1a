import pytest

from models.errors import UsageError
from models.experiment import ExperimentConfig
from models.index import MbtMeta, MvmbMeta, StructureKind
from services.experiments import HEADERS, run

MBT = (StructureKind.MBT,)
POS = (StructureKind.POS,)


def small(subcommand: str, **overrides) -> ExperimentConfig:
    params = dict(n_values=(400,), n_ops=200, batch_sizes=(50,), repetitions=1, value_len_mean=32)
    params.update(overrides)
    return ExperimentConfig(subcommand, **params)


@pytest.mark.parametrize("subcommand", ExperimentConfig.VALID_SUBCOMMANDS)
def test_rows_follow_headers(subcommand):
    overrides = {"deltas": (1, 5)} if subcommand == "diffbench" else {}
    if subcommand == "params":
        overrides = {"pos_node_sizes": (512, 1024), "mbt_bucket_counts": (64, 128), "mpt_key_mins": (5, 9)}
    rows = run(small(subcommand, groups=2, **overrides))
    assert rows
    assert all(list(row) == HEADERS[subcommand] for row in rows)


def test_read_only_bucket_tree_visits():
    (row,) = run(small("throughput", structures=MBT))
    # Default 1024 buckets under fanout 4: five internal levels plus the bucket.
    assert row["mean_visits"] == "6.0000"


def test_deterministic_columns_repeat():
    cfg = small("storage", versions=3)
    assert run(cfg) == run(cfg)
    cfg = small("dedup", structures=POS, groups=3, overlaps=(0.2, 0.8))
    assert run(cfg) == run(cfg)


def test_storage_grows_with_versions():
    rows = run(small("storage", structures=MBT, versions=3))
    assert [r["n_versions"] for r in rows] == [1, 2, 3]
    totals = [r["total_bytes"] for r in rows]
    assert totals == sorted(totals)


def test_zero_versions():
    rows = run(small("storage", structures=MBT, versions=0))
    assert rows == [{"structure": "mbt", "n_versions": 0, "total_bytes": 0, "total_nodes": 0}]


def test_recursive_identity_ablation_removes_sharing():
    rows = run(small("dedup", structures=(StructureKind.MBT, StructureKind.POS), groups=2, ablate_ri=True))
    assert {r["measured_eta"] for r in rows} == {"0.000000"}
    rows = run(small("dedup", structures=POS, mode="alpha", alphas=(0.2,), ablate_ri=True))
    assert rows[0]["measured_eta"] == "0.000000"


def test_alpha_mode_reports_predictions():
    rows = run(small("dedup", mode="alpha", alphas=(0.1,)))
    predicted = {r["structure"]: r["predicted_eta"] for r in rows}
    assert predicted["mvmb"] == ""
    assert float(predicted["pos"]) == pytest.approx(0.45)


def test_overlap_raises_sharing():
    rows = run(small("dedup", structures=POS, groups=3, overlaps=(0.0, 1.0)))
    low, high = (float(r["measured_eta"]) for r in rows)
    assert high > low


def test_smaller_batches_share_more():
    cfg = small("dedup", structures=(StructureKind.MBT, StructureKind.POS), mode="batch", groups=2, batch_sizes=(10, 50, 200))
    rows = run(cfg)
    for kind in ("mbt", "pos"):
        etas = [float(r["measured_eta"]) for r in rows if r["structure"] == kind]
        assert [r["batch"] for r in rows if r["structure"] == kind] == [10, 50, 200]
        assert etas[0] > etas[1] > etas[2]


def test_diff_visits_follow_one_path():
    (row,) = run(small("diffbench", structures=MBT, deltas=(1,)))
    assert row["visits"] <= 2 * 6 + 2


def test_invalid_configs():
    with pytest.raises(UsageError):
        ExperimentConfig("dedup", structures=MBT, ablate_si=True)
    with pytest.raises(UsageError):
        ExperimentConfig("nope")
    with pytest.raises(UsageError):
        run(small("params", structures=(StructureKind.MPT,), mpt_key_mins=(20,)))
    with pytest.raises(UsageError):
        run(small("diffbench", structures=MBT, deltas=(10_000,)))


def test_mvmb_order_follows_entry_size():
    assert ExperimentConfig("storage").meta_for(StructureKind.MVMB) == MvmbMeta(5)
    assert ExperimentConfig("storage", value_len_mean=32).meta_for(StructureKind.MVMB) == MvmbMeta(23)
    assert ExperimentConfig("storage", value_len_mean=32, mvmb_order=7).meta_for(StructureKind.MVMB) == MvmbMeta(7)


def test_structure_params_need_their_structure():
    with pytest.raises(UsageError, match="mbt-buckets"):
        ExperimentConfig("storage", structures=POS, mbt_buckets=64)
    with pytest.raises(UsageError, match="mvmb-order"):
        ExperimentConfig("dedup", structures=POS, mvmb_order=7)
    with pytest.raises(UsageError, match="pos-window"):
        ExperimentConfig("storage", structures=MBT, pos_window=16)
    cfg = ExperimentConfig("storage", structures=MBT, mbt_buckets=64, mbt_fanout=8)
    assert cfg.meta_for(StructureKind.MBT) == MbtMeta(capacity=64, fanout=8)

@pytest.mark.slow
def test_parameter_trends():
    cfg = ExperimentConfig(
        "params",
        structures=(StructureKind.POS, StructureKind.MBT, StructureKind.MPT),
        n_values=(20_000,),
        batch_sizes=(500,),
    )
    rows = run(cfg)
    by_kind: dict[str, list[float]] = {}
    for row in rows:
        by_kind.setdefault(row["structure"], []).append(float(row["measured_eta"]))
    pos, mbt, mpt = by_kind["pos"], by_kind["mbt"], by_kind["mpt"]
    assert all(a > b for a, b in zip(pos, pos[1:]))
    assert all(a < b for a, b in zip(mbt, mbt[1:]))
    assert all(a <= b for a, b in zip(mpt, mpt[1:]))


@pytest.mark.slow
def test_structural_invariance_ablation_loses_dedup():
    base = dict(structures=POS, n_values=(10_000,), n_ops=10_000, overlaps=(1.0,), groups=4, batch_sizes=(1000,))
    (normal,) = run(ExperimentConfig("dedup", **base))
    (ablated,) = run(ExperimentConfig("dedup", ablate_si=True, **base))
    assert float(normal["measured_eta"]) - float(ablated["measured_eta"]) >= 0.1
