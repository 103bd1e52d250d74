"""The storage engine end to end: CRUD, inverted indices, exact k-NN,
snapshot persistence.
"""

import tempfile
from pathlib import Path

import numpy as np

from bhakti import Engine, dsl

engine = Engine()
rng = np.random.default_rng(7)

# store 100 documents; each vector is the unique key
for i in range(100):
    engine.create(
        rng.normal(size=4),
        {"grp": "hot" if i % 10 == 0 else "cold", "rank": float(i)},
        indices=["grp"],  # inverted index, registered once, backfilled
    )
print(f"{len(engine)} documents, dim {engine.dim}, indices {engine.list_indices()}")

# exact nearest neighbors, optionally pre-filtered
query = rng.normal(size=4)
top = engine.knn_search(query, "cosine", 3)
print("\ntop-3 cosine:")
for doc, dist in top:
    print(f"  id={doc.id:<3} dist={dist:.4f} fields={doc.fields}")

hot_only = engine.knn_search(query, "cosine", 3, dsl.parse('grp == "hot"'))
print("top-3 among grp==hot:", [doc.id for doc, _ in hot_only])

# documents are found, modified and removed by their vector
vec = top[0][0].vector
engine.mod_doc_by_vector(vec, "starred", True)
print("\nmodified:", engine.find_doc_by_vector(vec).fields)
engine.remove_by_vector(vec)
print("after remove:", engine.find_doc_by_vector(vec))
removed = engine.remove_by_query(dsl.parse("rank >= 90"))
print(f"remove_by_query dropped {removed} documents")

# snapshots are atomic (tmp file + rename) and carry checksums
with tempfile.TemporaryDirectory() as tmp:
    engine.save(tmp)
    print("\nsnapshot files:", sorted(p.name for p in Path(tmp).iterdir()))
    restored = Engine.load(tmp)
    same = restored.documents() == engine.documents()
    print("restored state identical:", same)
