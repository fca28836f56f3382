"""Ranked result lists shared by lexical, dense, and fused retrieval."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class RankedList:
    """Ordered (doc_id, score) entries for one query from one signal.

    Invariants: scores non-increasing, ties broken by ascending doc id,
    no duplicate doc ids. Construct through :func:`ranked_from_scores`
    unless the entries are already in canonical order.
    """

    entries: list[tuple[str, float]]
    query_id: str = ""
    source: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def ranks(self) -> dict[str, int]:
        """Doc id -> 1-based rank."""
        return {doc_id: i for i, (doc_id, _) in enumerate(self.entries, start=1)}

    def scores(self) -> dict[str, float]:
        return dict(self.entries)

    def top(self, k: int) -> "RankedList":
        return RankedList(self.entries[:k], query_id=self.query_id, source=self.source)

    def validate(self) -> None:
        seen: set[str] = set()
        prev: float | None = None
        prev_id: str | None = None
        for doc_id, score in self.entries:
            if doc_id in seen:
                raise ValueError(f"duplicate doc id {doc_id!r} in ranked list")
            seen.add(doc_id)
            if prev is not None:
                if score > prev:
                    raise ValueError("scores must be non-increasing")
                if score == prev and prev_id is not None and doc_id < prev_id:
                    raise ValueError("score ties must be ordered by ascending doc id")
            prev, prev_id = score, doc_id


def ranked_from_scores(
    scores: dict[str, float], query_id: str = "", source: str = "", k: int | None = None
) -> RankedList:
    """Canonical ranking of a score map: score desc, then doc id asc."""
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    if k is not None:
        ordered = ordered[:k]
    return RankedList([(d, float(s)) for d, s in ordered], query_id=query_id, source=source)
