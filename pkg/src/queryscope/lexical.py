"""Okapi BM25 inverted index and ranked keyword search.

Scoring uses idf(t) = ln((N - df + 0.5) / (df + 0.5)) floored at 0, and
tf saturation tf*(k1+1) / (tf + k1*(1 - b + b*|d|/avgdl)). Documents that
match no query term score 0 and are never returned, so result lists may
be shorter than k on small corpora.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, document_tokens, preprocess_text
from .errors import SearchError
from .ranking import RankedList

_INDEX_MAGIC = b"QSBM25\x01"


@dataclass
class Bm25Index:
    """Immutable unigram inverted index with Okapi parameters."""

    doc_ids: list[str]
    doc_lengths: list[int]
    postings: dict[str, list[tuple[int, int]]]  # term -> [(doc ordinal, tf)]
    k1: float = 1.5
    b: float = 0.75
    avg_doc_length: float = field(init=False)

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise SearchError(f"k1 must be positive, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise SearchError(f"b must be in [0, 1], got {self.b}")
        if not self.doc_ids:
            raise SearchError("cannot build a BM25 index over an empty corpus")
        self.avg_doc_length = sum(self.doc_lengths) / len(self.doc_lengths)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        postings = self.postings.get(term)
        if not postings:
            return 0.0
        df = len(postings)
        raw = math.log((self.n_docs - df + 0.5) / (df + 0.5))
        return max(raw, 0.0)


def build_bm25_index(corpus: Corpus, k1: float = 1.5, b: float = 0.75) -> Bm25Index:
    """Index the preprocessed unigram tokens of every document."""
    if len(corpus) == 0:
        raise SearchError("cannot build a BM25 index over an empty corpus")
    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = {}
    for ordinal, doc in enumerate(corpus):
        tokens = document_tokens(doc)
        doc_ids.append(doc.id)
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))
    return Bm25Index(doc_ids=doc_ids, doc_lengths=doc_lengths, postings=postings, k1=k1, b=b)


def bm25_search(index: Bm25Index, query: str, k: int, query_id: str = "") -> RankedList:
    """Top-k documents by accumulated Okapi score; zero scorers excluded."""
    if k < 1:
        raise SearchError(f"k must be >= 1, got {k}")
    terms = preprocess_text(query)
    if not terms:
        raise SearchError(f"query {query!r} is empty after preprocessing")
    scores: dict[int, float] = {}
    for term in terms:
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = index.idf(term)
        if idf == 0.0:
            continue
        for ordinal, tf in postings:
            norm = index.k1 * (1 - index.b + index.b * index.doc_lengths[ordinal] / index.avg_doc_length)
            scores[ordinal] = scores.get(ordinal, 0.0) + idf * tf * (index.k1 + 1) / (tf + norm)
    entries = sorted(
        ((index.doc_ids[o], s) for o, s in scores.items() if s > 0.0),
        key=lambda item: (-item[1], item[0]),
    )
    return RankedList(entries[:k], query_id=query_id, source="bm25")


def save_bm25_index(index: Bm25Index, path: str | Path) -> None:
    """Persist the index to a single binary file.

    Layout (all integers little-endian): magic, k1/b as float64,
    n_docs, then per doc an id (u32 length + utf-8 bytes) and u32 length,
    then u32 term count, then per term the term bytes, posting count, and
    (ordinal u32, tf u32) pairs. Not guaranteed stable across versions;
    the magic encodes the version byte.
    """
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(struct.pack("<dd", index.k1, index.b))
        fh.write(struct.pack("<I", index.n_docs))
        for doc_id, length in zip(index.doc_ids, index.doc_lengths):
            raw = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", length))
        fh.write(struct.pack("<I", len(index.postings)))
        for term in sorted(index.postings):
            raw = term.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            plist = index.postings[term]
            fh.write(struct.pack("<I", len(plist)))
            for ordinal, tf in plist:
                fh.write(struct.pack("<II", ordinal, tf))


def load_bm25_index(path: str | Path) -> Bm25Index:
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(_INDEX_MAGIC):
        raise SearchError(f"{path} is not a BM25 index file (bad magic)")
    offset = len(_INDEX_MAGIC)

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        values = struct.unpack_from(fmt, data, offset)
        offset += size
        return values

    def take_str() -> str:
        nonlocal offset
        (length,) = take("<I")
        raw = data[offset : offset + length]
        offset += length
        return raw.decode("utf-8")

    k1, b = take("<dd")
    (n_docs,) = take("<I")
    doc_ids: list[str] = []
    doc_lengths: list[int] = []
    for _ in range(n_docs):
        doc_ids.append(take_str())
        doc_lengths.append(take("<I")[0])
    (n_terms,) = take("<I")
    postings: dict[str, list[tuple[int, int]]] = {}
    for _ in range(n_terms):
        term = take_str()
        (n_postings,) = take("<I")
        plist = [tuple(take("<II")) for _ in range(n_postings)]
        postings[term] = plist  # type: ignore[assignment]
    return Bm25Index(doc_ids=doc_ids, doc_lengths=doc_lengths, postings=postings, k1=k1, b=b)
