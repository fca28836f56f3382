import math

import numpy as np
import pytest

from queryscope.corpus import Corpus, Document, document_tokens, preprocess_text
from queryscope.errors import SearchError
from queryscope.lexical import bm25_search, build_bm25_index, load_bm25_index, save_bm25_index


def brute_force_scores(corpus: Corpus, query: str, k1=1.5, b=0.75) -> dict[str, float]:
    """Independent closed-form evaluation used as the oracle."""
    token_lists = [document_tokens(doc) for doc in corpus]
    lengths = [len(t) for t in token_lists]
    avg = sum(lengths) / len(lengths)
    n = len(corpus)
    scores: dict[str, float] = {}
    for doc, tokens, length in zip(corpus, token_lists, lengths):
        score = 0.0
        for term in preprocess_text(query):
            df = sum(1 for other in token_lists if term in other)
            if df == 0:
                continue
            idf = max(math.log((n - df + 0.5) / (df + 0.5)), 0.0)
            tf = tokens.count(term)
            if tf == 0:
                continue
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * length / avg))
        if score > 0:
            scores[doc.id] = score
    return scores


class TestBuildIndex:
    def test_idf_single_doc_of_three(self, tiny_corpus):
        index = build_bm25_index(tiny_corpus)
        assert index.idf("appl") == pytest.approx(math.log(2.5 / 1.5))

    def test_idf_floor_at_zero(self):
        corpus = Corpus([Document(f"d{i}", "shared term") for i in range(4)])
        index = build_bm25_index(corpus)
        assert index.idf("share") == 0.0  # raw idf is negative

    def test_avg_doc_length(self):
        corpus = Corpus([Document("a", "one two"), Document("b", "one two three four")])
        index = build_bm25_index(corpus)
        assert index.avg_doc_length == 3.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(SearchError):
            build_bm25_index(Corpus([]))

    def test_parameter_validation(self, tiny_corpus):
        with pytest.raises(SearchError):
            build_bm25_index(tiny_corpus, k1=0.0)
        with pytest.raises(SearchError):
            build_bm25_index(tiny_corpus, b=1.5)


class TestSearch:
    def test_single_term_at_average_length(self, tiny_corpus):
        # equal-length docs, term once in doc a: tf factor is exactly 1
        result = bm25_search(build_bm25_index(tiny_corpus), "apple", 10)
        assert result.entries == [("a", pytest.approx(math.log(2.5 / 1.5)))]

    def test_stopword_only_query_rejected(self, tiny_corpus):
        with pytest.raises(SearchError, match="empty after preprocessing"):
            bm25_search(build_bm25_index(tiny_corpus), "the and of", 10)

    def test_ties_break_by_doc_id(self):
        corpus = Corpus([
            Document("zz", "token filler"),
            Document("aa", "token filler"),
            Document("mm", "unrelated words"),
            Document("nn", "other unrelated words"),
            Document("oo", "more unrelated words"),
        ])
        result = bm25_search(build_bm25_index(corpus), "token", 10)
        assert result.doc_ids() == ["aa", "zz"]

    def test_zero_scorers_excluded(self, tiny_corpus):
        result = bm25_search(build_bm25_index(tiny_corpus), "apple", 3)
        assert len(result) == 1  # b and c never match

    def test_k_validation(self, tiny_corpus):
        with pytest.raises(SearchError):
            bm25_search(build_bm25_index(tiny_corpus), "apple", 0)

    def test_matches_brute_force_on_random_corpora(self):
        rng = np.random.default_rng(7)
        terms = [f"term{i}" for i in range(12)]
        for trial in range(25):
            docs = []
            for d in range(int(rng.integers(2, 10))):
                words = rng.choice(terms, size=rng.integers(2, 12))
                docs.append(Document(f"d{d}", " ".join(words)))
            corpus = Corpus(docs)
            query = " ".join(rng.choice(terms, size=3))
            index = build_bm25_index(corpus)
            got = bm25_search(index, query, 10)
            expected = brute_force_scores(corpus, query)
            assert got.doc_ids() == sorted(expected, key=lambda d: (-expected[d], d))
            for doc_id, score in got.entries:
                assert score == pytest.approx(expected[doc_id], abs=1e-9)

    def test_adding_nonmatching_doc_preserves_order(self):
        rng = np.random.default_rng(13)
        terms = [f"w{i}" for i in range(8)]
        for trial in range(10):
            docs = [
                Document(f"d{d}", " ".join(rng.choice(terms, size=rng.integers(3, 9))))
                for d in range(5)
            ]
            query = " ".join(rng.choice(terms, size=2))
            before = bm25_search(build_bm25_index(Corpus(docs)), query, 10).doc_ids()
            extended = docs + [Document("zzz", "completely unrelated vocabulary")]
            after = bm25_search(build_bm25_index(Corpus(extended)), query, 10).doc_ids()
            assert [d for d in after if d != "zzz"] == before

    def test_ranked_list_invariants_hold(self):
        rng = np.random.default_rng(3)
        terms = [f"w{i}" for i in range(6)]
        for trial in range(15):
            docs = [
                Document(f"d{d}", " ".join(rng.choice(terms, size=rng.integers(2, 8))))
                for d in range(int(rng.integers(2, 9)))
            ]
            query = " ".join(rng.choice(terms, size=2))
            bm25_search(build_bm25_index(Corpus(docs)), query, 5).validate()


class TestPersistence:
    def test_round_trip(self, tiny_corpus, tmp_path):
        index = build_bm25_index(tiny_corpus, k1=1.2, b=0.6)
        path = tmp_path / "bm25.idx"
        save_bm25_index(index, path)
        loaded = load_bm25_index(path)
        assert loaded.k1 == index.k1
        assert loaded.b == index.b
        assert loaded.doc_ids == index.doc_ids
        assert loaded.doc_lengths == index.doc_lengths
        assert loaded.postings == {t: list(map(tuple, p)) for t, p in index.postings.items()}
        assert bm25_search(loaded, "apple", 3).entries == bm25_search(index, "apple", 3).entries

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.idx"
        path.write_bytes(b"NOTANINDEX")
        with pytest.raises(SearchError, match="magic"):
            load_bm25_index(path)
