"""Client/server over the JSON wire protocol, in one process.

Equivalent shell session:

    bhakti serve --host 127.0.0.1 --port 8567 --data-dir ./data &
    bhakti ping
    bhakti create --vector '[1, 0]' --fields '{"uid": "u1"}' --index uid
    bhakti knn --vector '[1, 0.2]' -k 2
"""

import json
import socket
import tempfile
from pathlib import Path

from bhakti import BhaktiClient, BhaktiServer, ServerConfig

with tempfile.TemporaryDirectory() as tmp:
    config = ServerConfig(host="127.0.0.1", port=0, data_dir=tmp)
    with BhaktiServer(config) as server:
        host, port = server.address
        print(f"server on {host}:{port}\n")

        # the raw protocol: one JSON line in, one JSON line out
        with socket.create_connection((host, port)) as sock:
            sock.sendall(
                b'{"db_engine": "dipamkara", "opt": "create", '
                b'"cmd": "create_index", "param": {"index": "my_index", "detailed": false}}\n'
            )
            print("raw request/response:")
            print(" ", sock.makefile("rb").readline().decode().rstrip())

        # the typed client hides the frames
        with BhaktiClient(f"{host}:{port}") as client:
            client.create_doc([1.0, 0.0], {"uid": "u1"}, indices=["uid"])
            client.create_doc([0.0, 1.0], {"uid": "u2"})
            print("\nknn via client:")
            for doc, dist in client.knn([1.0, 0.2], "cosine", 2):
                print(f"  id={doc.id} dist={dist:.4f} {doc.fields}")

            # server errors arrive as typed exceptions with stable prefixes
            try:
                client.create_doc([1.0, 0.0], {})
            except Exception as exc:
                print("\nduplicate vector ->", exc)

            print("\nsaved:", client.save())
    print("\nserver stopped; snapshot persisted:")
    print(" ", json.dumps(sorted(p.name for p in Path(tmp).iterdir())))
