"""Score- and rank-based fusion of lexical and dense rankings."""

from __future__ import annotations

import logging

from .errors import SearchError
from .ranking import RankedList, ranked_from_scores

logger = logging.getLogger(__name__)


def _normalized_scores(ranked: RankedList, mode: str) -> dict[str, float]:
    """Per-signal score normalization; a degenerate signal contributes 0."""
    if not ranked.entries:
        return {}
    scores = ranked.scores()
    if mode == "max":
        top = max(scores.values())
        if top <= 0.0:
            logger.warning(
                "signal %r has max score %.3g <= 0; it contributes 0 to fusion",
                ranked.source, top,
            )
            return {d: 0.0 for d in scores}
        return {d: s / top for d, s in scores.items()}
    if mode == "minmax":
        lo, hi = min(scores.values()), max(scores.values())
        if hi <= lo:
            logger.warning(
                "signal %r has constant scores; it contributes 0 to fusion", ranked.source
            )
            return {d: 0.0 for d in scores}
        return {d: (s - lo) / (hi - lo) for d, s in scores.items()}
    raise SearchError(f"unknown normalization mode {mode!r} (use 'max' or 'minmax')")


def fuse_simple_sum(
    list_bm25: RankedList, list_dense: RankedList, normalization: str = "max"
) -> RankedList:
    """Sum of per-signal normalized scores over the union of both lists.

    Default normalization divides each signal by its own max score; a doc
    absent from one signal contributes 0 from that signal. Ties break by
    ascending doc id.
    """
    if not list_bm25.entries and not list_dense.entries:
        raise SearchError("cannot fuse two empty ranked lists")
    bm25 = _normalized_scores(list_bm25, normalization)
    dense = _normalized_scores(list_dense, normalization)
    fused = {d: bm25.get(d, 0.0) + dense.get(d, 0.0) for d in bm25.keys() | dense.keys()}
    return ranked_from_scores(fused, query_id=list_bm25.query_id or list_dense.query_id,
                              source="simple_sum")


def fuse_weighted(
    list_bm25: RankedList, list_dense: RankedList, w: float, normalization: str = "max"
) -> RankedList:
    """w * normalized BM25 + (1 - w) * normalized dense over the union."""
    if not 0.0 <= w <= 1.0:
        raise SearchError(f"weight must be in [0, 1], got {w}")
    if not list_bm25.entries and not list_dense.entries:
        raise SearchError("cannot fuse two empty ranked lists")
    bm25 = _normalized_scores(list_bm25, normalization)
    dense = _normalized_scores(list_dense, normalization)
    fused = {
        d: w * bm25.get(d, 0.0) + (1.0 - w) * dense.get(d, 0.0)
        for d in bm25.keys() | dense.keys()
    }
    return ranked_from_scores(fused, query_id=list_bm25.query_id or list_dense.query_id,
                              source="weighted")


def fuse_rrf(
    lists: list[RankedList], rrf_k: float = 60.0, weights: list[float] | None = None
) -> RankedList:
    """Weighted reciprocal rank fusion: score(d) = sum_i w_i / (rank_i(d) + k).

    Ranks are 1-based within each input list; docs absent from a list
    contribute 0 from it. Depends only on input orderings, never on raw
    scores.
    """
    if not lists:
        raise SearchError("fuse_rrf needs at least one ranked list")
    if rrf_k <= 0:
        raise SearchError(f"rrf_k must be positive, got {rrf_k}")
    if weights is None:
        weights = [1.0] * len(lists)
    if len(weights) != len(lists):
        raise SearchError(f"{len(lists)} lists but {len(weights)} weights")
    fused: dict[str, float] = {}
    for ranked, weight in zip(lists, weights):
        for rank, (doc_id, _) in enumerate(ranked.entries, start=1):
            fused[doc_id] = fused.get(doc_id, 0.0) + weight / (rank + rrf_k)
    query_id = next((l.query_id for l in lists if l.query_id), "")
    return ranked_from_scores(fused, query_id=query_id, source="rrf")
