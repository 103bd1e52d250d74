"""Integration: launch the server binary, exercise the full command table,
and check knn parity with the reference client on one shared fixture."""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import time

import pytest

from bhakti_client import BhaktiClient, ServerException, Timeout, ValidationError


@pytest.fixture(scope="module")
def server(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("server-data")
    proc = subprocess.Popen(
        [sys.executable, "-m", "bhakti.cli", "serve", "--host", "127.0.0.1",
         "--port", "0", "--data-dir", str(data_dir)],
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )
    line = proc.stdout.readline()
    address = json.loads(line)["listening"]
    yield address
    proc.send_signal(signal.SIGTERM)
    assert proc.wait(timeout=10) == 0


def test_full_command_table(server):
    with BhaktiClient(server) as client:
        assert client.ping() is True
        assert client.create_index("my_index") is True

        doc = client.create_doc([1.0, 0.0], {"uid": "u1", "rank": 1}, indices=["uid"])
        assert doc["id"] == 0
        assert doc["fields"] == {"uid": "u1", "rank": 1.0}
        client.create_doc([0.0, 1.0], {"uid": "u2"})

        assert client.get_by_vector([1.0, 0.0])["fields"]["uid"] == "u1"
        assert client.get_by_vector([9.0, 9.0]) is None

        hits = client.knn([1.0, 0.1], "cosine", 5)
        assert [d["id"] for d, _ in hits] == [0, 1]
        filtered = client.knn([1.0, 0.1], "cosine", 5, query='uid == "u2"')
        assert [d["id"] for d, _ in filtered] == [1]

        modded = client.mod_field([1.0, 0.0], "rank", 42)
        assert modded["fields"]["rank"] == 42.0

        assert sorted(client.indices_list()) == ["my_index", "uid"]
        assert client.remove_by_vector([0.0, 1.0]) is True
        assert client.remove_by_vector([0.0, 1.0]) is False
        assert client.remove_by_query('uid == "u1"') == 1
        assert client.save() is True


def test_server_exceptions_surface(server):
    with BhaktiClient(server) as client:
        client.create_doc([7.0, 7.0], {})
        with pytest.raises(ServerException) as info:
            client.create_doc([7.0, 7.0], {})
        assert info.value.message.startswith("VectorExists")
        client.remove_by_vector([7.0, 7.0])


def test_client_side_validation(server):
    with BhaktiClient(server) as client:
        with pytest.raises(ValidationError):
            client.knn([1.0], "cosine", 0)
        with pytest.raises(ValidationError):
            client.knn([1.0], "manhattan", 1)
        with pytest.raises(ValidationError):
            client.create_doc([], {})


def test_timeout_fault_injection():
    import socket

    silent = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    silent.bind(("127.0.0.1", 0))
    silent.listen(1)
    host, port = silent.getsockname()
    try:
        client = BhaktiClient(f"{host}:{port}", timeout=0.3)
        with pytest.raises(Timeout):
            client.ping()
        client.close()
    finally:
        silent.close()


def toy_embed(dim=2):
    """Mirror of the reference toy embedder, for parity fixtures.

    dim 2 because the shared server's engine dimension was fixed at 2 by
    the first insert of the command-table test.
    """
    pytest.importorskip("bhakti.memory")
    from bhakti.memory import toy_embedder

    emb = toy_embedder(dim)
    return lambda text: [float(x) for x in emb.embed(text)]


def test_knn_parity_with_reference_client(server):
    """[SECONDARY] acceptance: identical knn results on one shared fixture."""
    reference_client = pytest.importorskip("bhakti.client")
    import numpy as np

    rng = np.random.default_rng(2718)
    with BhaktiClient(server) as sdk, reference_client.BhaktiClient(server) as ref:
        sdk.remove_by_query('grp != "never" || grp == "never"')  # clean slate
        base = sdk.get_by_vector([123.0, 456.0])  # no residue from other tests
        assert base is None
        for i in range(60):
            vec = [float(x) for x in rng.normal(size=2)]
            sdk.create_doc(vec, {"grp": f"g{i % 3}", "i": float(i)}, indices=["grp"] if i == 0 else ())
        for metric in ("cosine", "euclidean", "euclidean_l2", "euclidean_z_score", "chebyshev"):
            for query in (None, 'grp == "g1"'):
                probe = [float(x) for x in rng.normal(size=2)]
                mine = sdk.knn(probe, metric, 7, query=query)
                theirs = ref.knn(probe, metric, 7, query=query)
                assert [(d["id"], dist) for d, dist in mine] == [
                    (d.id, dist) for d, dist in theirs
                ]


def test_mem_add_and_recall_over_the_wire(server):
    embed = toy_embed()
    with BhaktiClient(server) as client:
        client.mem_add("what is bhakti", "a vector database", "mu1", "mb1", embed, timestamp=1_700_000_000.0)
        client.mem_add("unrelated", "other answer", "mu2", "mb1", embed, timestamp=1_700_000_001.0)
        got = client.mem_recall("what is bhakti", 5, "cosine", "mu1", "mb1", embed)
        assert len(got) == 1
        assert got[0].endswith("Q: what is bhakti | A: a vector database")
        assert got[0].startswith("[2023-11-14T")
        assert client.mem_recall("what is bhakti", 5, "cosine", "mu9", "mb1", embed) == []


def test_mem_recall_matches_reference_memory_layer(server):
    reference = pytest.importorskip("bhakti")
    embed = toy_embed()
    emb = reference.toy_embedder(2)
    with BhaktiClient(server) as sdk, reference.BhaktiClient(server) as ref:
        for i in range(6):
            sdk.mem_add(f"pq {i}", f"pa {i}", "pu", "pb", embed, w_q=0.7, w_a=0.3,
                        timestamp=1_700_000_100.0 + i)
        mine = sdk.mem_recall("pq 2 again", 4, "cosine", "pu", "pb", embed)
        theirs = reference.recall_memories_templated("pq 2 again", 4, "cosine", "pu", "pb", emb, ref)
        assert mine == theirs
