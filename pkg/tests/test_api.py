import base64

import pytest

from api.app import create_app
from models.index import PosMeta, StructureKind
from services.data_manager import DataManager
from services.managers import RootManager
from tests.conftest import make_entries


@pytest.fixture
def records():
    return make_entries(200, seed=9)


@pytest.fixture
def client(tmp_path, records):
    data_manager = DataManager(tmp_path)
    roots = RootManager(data_manager)
    index = roots.indexes.get(StructureKind.POS, PosMeta.for_node_bytes(256, 16))
    v1 = index.put_batch(index.empty(), records)
    v2 = index.insert(v1, records[0].key, b"changed")
    roots.add("v1", v1)
    roots.add("v2", v2)
    app = create_app(data_manager)
    app.config["TESTING"] = True
    return app.test_client()


def test_stats_and_roots(client):
    stats = client.get("/api/stats").get_json()
    assert stats["node_count"] > 0
    assert stats["total_bytes"] > 0

    roots = client.get("/api/roots").get_json()
    assert sorted(roots) == ["v1", "v2"]
    assert roots["v1"]["kind"] == "pos"

    detail = client.get("/api/roots/v1").get_json()
    assert detail["height"] >= 1
    assert detail["node_count"] >= detail["height"]
    assert client.get("/api/roots/nope").status_code == 404


def test_entry_lookup(client, records):
    entry = records[5]
    response = client.get(f"/api/roots/v1/entries/{entry.key.hex()}")
    assert response.status_code == 200
    data = response.get_json()
    assert base64.b64decode(data["value"]) == entry.value
    assert data["visits"] >= 1

    assert client.get(f"/api/roots/v1/entries/{b'absent'.hex()}").status_code == 404
    assert client.get("/api/roots/v1/entries/zz").status_code == 400
    assert client.get("/api/roots/nope/entries/00").status_code == 404


def test_proof_round_trip(client, records):
    entry = records[17]
    proof = client.get(f"/api/roots/v1/proof/{entry.key.hex()}").get_json()
    body = {
        "root": "v1",
        "key": entry.key.hex(),
        "value": base64.b64encode(entry.value).decode("ascii"),
        "proof": {"path_nodes": proof["path_nodes"]},
    }
    assert client.post("/api/verify", json=body).get_json() == {"valid": True}

    forged = dict(body, value=base64.b64encode(b"forged").decode("ascii"))
    assert client.post("/api/verify", json=forged).get_json() == {"valid": False}

    # A v1 proof does not check out against the v2 digest.
    stale = dict(body, root="v2")
    assert client.post("/api/verify", json=stale).get_json() == {"valid": False}

    assert client.post("/api/verify", json={"root": "v1"}).status_code == 400
    assert client.post("/api/verify", json=dict(body, root="nope")).status_code == 404
    assert client.get(f"/api/roots/v1/proof/{b'absent'.hex()}").status_code == 404


def test_diff_and_dedup(client, records):
    diff = client.get("/api/diff?a=v1&b=v2").get_json()
    assert diff["modified"] == [
        {"key": records[0].key.hex(), "value_a": records[0].value.hex(), "value_b": b"changed".hex()}
    ]
    assert diff["only_in_a"] == [] and diff["only_in_b"] == []
    assert diff["visits"] > 1
    assert client.get("/api/diff?a=v1&b=nope").status_code == 404

    report = client.get("/api/dedup?roots=v1,v2").get_json()
    assert 0.0 < report["dedup_ratio"] < 0.5
    assert report["union_nodes"] < report["sum_nodes"]
    assert client.get("/api/dedup?roots=v1,nope").status_code == 404
    assert client.get("/api/dedup").status_code == 404
