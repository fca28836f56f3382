"""Document collections, text preprocessing, and n-gram vocabularies.

Corpus files are UTF-8 line-delimited JSON records:
``{"id": string, "title": string|null, "text": string}``.
Preprocessing is lowercase -> split on non-alphanumeric -> drop stopwords
-> Porter-stem; the stopword list ships with the package (one token per
line) so runs are reproducible regardless of installed NLP packages.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import CorpusError
from .stemmer import stem

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def _load_stopwords() -> frozenset[str]:
    text = resources.files("queryscope.data").joinpath("stopwords_english.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


STOPWORDS = _load_stopwords()


def stopwords_sha256() -> str:
    """Hex digest of the bundled stopword file, for run manifests."""
    data = resources.files("queryscope.data").joinpath("stopwords_english.txt").read_bytes()
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    title: str | None = None

    def indexed_text(self) -> str:
        """Text as seen by retrieval and topic models: title + body."""
        if self.title:
            return f"{self.title} {self.text}"
        return self.text


@dataclass
class Corpus:
    """Ordered, id-unique collection of documents."""

    documents: list[Document]
    source_path: str = ""
    _by_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._by_id = {}
        for i, doc in enumerate(self.documents):
            if doc.id in self._by_id:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            self._by_id[doc.id] = i

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self.documents[self._by_id[doc_id]]
        except KeyError:
            raise CorpusError(f"unknown document id {doc_id!r}") from None

    def ids(self) -> list[str]:
        return [doc.id for doc in self.documents]

    def subset(self, doc_ids: list[str]) -> "Corpus":
        """New corpus with the given documents, in the given order."""
        return Corpus([self.get(d) for d in doc_ids], source_path=self.source_path)


def load_corpus(path: str | Path) -> Corpus:
    """Load a line-delimited JSON corpus file.

    Raises CorpusError with the offending 1-based line number for
    malformed records, missing/empty mandatory fields, and duplicate ids.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    documents: list[Document] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON record: {exc}") from None
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record is not a JSON object")
            doc_id = record.get("id")
            text = record.get("text")
            title = record.get("title")
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusError(f"{path}:{lineno}: missing or empty 'id'")
            if not isinstance(text, str) or not text.strip():
                raise CorpusError(f"{path}:{lineno}: missing or empty 'text'")
            if title is not None and not isinstance(title, str):
                raise CorpusError(f"{path}:{lineno}: 'title' must be a string or null")
            if doc_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
            seen.add(doc_id)
            documents.append(Document(id=doc_id, text=text, title=title))
    return Corpus(documents, source_path=str(path))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus in the canonical on-disk form (load/save round-trips)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus:
            record = {"id": doc.id, "title": doc.title, "text": doc.text}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def preprocess_text(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stopwords, stem."""
    tokens = [t for t in _TOKEN_SPLIT.split(text.lower()) if t]
    return [stem(t) for t in tokens if t not in STOPWORDS]


def document_tokens(doc: Document) -> list[str]:
    return preprocess_text(doc.indexed_text())


def ngrams(tokens: list[str], ngram_range: tuple[int, int] = (1, 2)) -> list[str]:
    """Space-joined n-grams of the token sequence, n in ngram_range."""
    lo, hi = ngram_range
    out: list[str] = []
    for n in range(lo, hi + 1):
        if n == 1:
            out.extend(tokens)
        else:
            out.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return out


@dataclass
class Vocabulary:
    """Term -> dense index map filtered by document-frequency bounds."""

    terms: dict[str, int]
    ngram_range: tuple[int, int] = (1, 2)
    min_df: int = 2
    max_df: float = 0.95

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.terms

    def index_of(self, term: str) -> int:
        return self.terms[term]

    def term_list(self) -> list[str]:
        out = [""] * len(self.terms)
        for term, idx in self.terms.items():
            out[idx] = term
        return out

    def doc_term_ids(self, doc: Document) -> list[int]:
        """In-vocabulary term occurrences (token multiset) for one document."""
        grams = ngrams(document_tokens(doc), self.ngram_range)
        return [self.terms[g] for g in grams if g in self.terms]


def build_vocabulary(
    corpus: Corpus,
    min_df: int = 2,
    max_df: float = 0.95,
    ngram_range: tuple[int, int] = (1, 2),
) -> Vocabulary:
    """Vocabulary of n-grams with min_df <= df and df/|corpus| <= max_df.

    Term indices follow first-occurrence order over the corpus, which makes
    vocabulary construction deterministic for a fixed document order.
    """
    if len(corpus) == 0:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    df: dict[str, int] = {}
    order: list[str] = []
    for doc in corpus:
        seen = set()
        for gram in ngrams(document_tokens(doc), ngram_range):
            if gram in seen:
                continue
            seen.add(gram)
            if gram not in df:
                df[gram] = 0
                order.append(gram)
            df[gram] += 1
    n_docs = len(corpus)
    terms: dict[str, int] = {}
    for gram in order:
        count = df[gram]
        if count >= min_df and count / n_docs <= max_df:
            terms[gram] = len(terms)
    if not terms:
        raise CorpusError(
            f"vocabulary is empty after df filtering (min_df={min_df}, max_df={max_df})"
        )
    return Vocabulary(terms=terms, ngram_range=ngram_range, min_df=min_df, max_df=max_df)
