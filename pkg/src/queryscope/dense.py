"""Exact top-k retrieval by cosine similarity over an embedding store."""

from __future__ import annotations

import numpy as np

from .embeddings import EmbeddingStore
from .errors import SearchError
from .ranking import RankedList


def dense_search(
    store: EmbeddingStore, query_vector: np.ndarray, k: int, query_id: str = ""
) -> RankedList:
    """Full-scan cosine ranking: score desc, ties by ascending doc id.

    Scores accumulate in float64 over the float32 stored components so
    orderings near ties are platform-stable. Returns min(k, |store|)
    entries; an approximate index is deliberately out of scope.
    """
    if k < 1:
        raise SearchError(f"k must be >= 1, got {k}")
    if len(store) == 0:
        raise SearchError("dense search over an empty embedding store")
    query = np.asarray(query_vector, dtype=np.float64)
    if query.shape != (store.dim,):
        raise SearchError(f"query dim {query.shape} does not match store dim {store.dim}")
    q_norm = float(np.linalg.norm(query))
    if q_norm == 0.0:
        raise SearchError("query vector has zero norm")

    ids = store.ids()
    matrix = store.matrix(ids).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        bad = ids[int(np.argmin(norms))]
        raise SearchError(f"stored vector for {bad!r} has zero norm")
    sims = (matrix @ query) / (norms * q_norm)
    order = sorted(range(len(ids)), key=lambda i: (-sims[i], ids[i]))[:k]
    return RankedList(
        [(ids[i], float(sims[i])) for i in order], query_id=query_id, source="dense"
    )
