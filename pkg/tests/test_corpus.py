import json

import pytest

from queryscope.corpus import (
    Corpus,
    Document,
    STOPWORDS,
    build_vocabulary,
    document_tokens,
    load_corpus,
    ngrams,
    preprocess_text,
    save_corpus,
    stopwords_sha256,
)
from queryscope.errors import CorpusError


def write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


class TestLoadCorpus:
    def test_preserves_file_order(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [
            {"id": "a", "title": None, "text": "first"},
            {"id": "b", "title": "t", "text": "second"},
            {"id": "c", "title": None, "text": "third"},
        ])
        corpus = load_corpus(path)
        assert corpus.ids() == ["a", "b", "c"]
        assert len(corpus) == 3

    def test_duplicate_id_reports_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [
            {"id": "a", "text": "x"},
            {"id": "b", "text": "y"},
            {"id": "a", "text": "z"},
        ])
        with pytest.raises(CorpusError, match=r":3: duplicate document id 'a'"):
            load_corpus(path)

    def test_empty_file_is_empty_corpus(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text("")
        assert len(load_corpus(path)) == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusError, match="not found"):
            load_corpus(tmp_path / "nope.jsonl")

    def test_malformed_record_reports_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "x"}\nnot json\n')
        with pytest.raises(CorpusError, match=":2:"):
            load_corpus(path)

    def test_blank_text_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [{"id": "a", "text": "   "}])
        with pytest.raises(CorpusError, match="empty 'text'"):
            load_corpus(path)

    def test_round_trip_is_byte_identical(self, tmp_path):
        first = tmp_path / "one.jsonl"
        second = tmp_path / "two.jsonl"
        corpus = Corpus([
            Document("a", "some text", title="A Title"),
            Document("b", "unicode éè", title=None),
        ])
        save_corpus(corpus, first)
        save_corpus(load_corpus(first), second)
        assert first.read_bytes() == second.read_bytes()


class TestCorpusContainer:
    def test_duplicate_in_memory_rejected(self):
        with pytest.raises(CorpusError):
            Corpus([Document("a", "x"), Document("a", "y")])

    def test_subset_orders_as_requested(self, tiny_corpus):
        sub = tiny_corpus.subset(["c", "a"])
        assert sub.ids() == ["c", "a"]

    def test_get_unknown_id(self, tiny_corpus):
        with pytest.raises(CorpusError):
            tiny_corpus.get("zz")

    def test_title_prepended_for_indexing(self):
        doc = Document("a", "body text", title="Heading")
        assert doc.indexed_text() == "Heading body text"
        assert document_tokens(doc)[0] == "head"


class TestPreprocess:
    def test_stopwords_and_stemming(self):
        assert preprocess_text("Running the tests") == ["run", "test"]

    def test_empty_input(self):
        assert preprocess_text("") == []

    def test_digits_retained(self):
        assert preprocess_text("COVID-19 transmission") == ["covid", "19", "transmiss"]

    def test_no_output_token_is_uppercase_or_stopword(self):
        tokens = preprocess_text("The Quick BROWN fox, didn't jump; OVER 12 lazy dogs!")
        assert tokens
        for token in tokens:
            assert token == token.lower()
            assert token not in STOPWORDS

    def test_deterministic(self):
        text = "Determinism matters for reproducible selection pipelines."
        assert preprocess_text(text) == preprocess_text(text)


def test_stopword_file_pinned():
    assert len(STOPWORDS) == 179
    assert len(stopwords_sha256()) == 64


class TestVocabulary:
    def test_min_df_threshold(self):
        corpus = Corpus([
            Document("a", "apple banana"),
            Document("b", "apple cherry"),
            Document("c", "dates elderberry"),
        ])
        vocab = build_vocabulary(corpus, min_df=2, max_df=0.95)
        assert "appl" in vocab
        assert "banana" not in vocab  # df 1 < 2

    def test_max_df_excludes_ubiquitous_terms(self):
        docs = [Document(f"d{i}", f"common word{i} filler{i}") for i in range(100)]
        vocab = build_vocabulary(Corpus(docs), min_df=1, max_df=0.95)
        assert "common" not in vocab  # df fraction 1.0 > 0.95

    def test_bigram_included_by_df(self):
        corpus = Corpus([
            Document("a", "chest pain report"),
            Document("b", "chest pain again"),
            Document("c", "unrelated words here"),
        ])
        vocab = build_vocabulary(corpus, min_df=2, max_df=0.95)
        assert "chest pain" in vocab
        assert "pain report" not in vocab  # df 1

    def test_df_bounds_hold_by_brute_force(self):
        corpus = Corpus([
            Document(f"d{i}", " ".join(f"tok{j}" for j in range(i % 4 + 1)) + " shared word")
            for i in range(12)
        ])
        vocab = build_vocabulary(corpus, min_df=2, max_df=0.9)
        doc_grams = [set(ngrams(document_tokens(doc))) for doc in corpus]
        for term in vocab.terms:
            df = sum(1 for grams in doc_grams if term in grams)
            assert df >= 2
            assert df / len(corpus) <= 0.9

    def test_indices_dense(self):
        corpus = Corpus([
            Document("a", "one two three"),
            Document("b", "one two three"),
        ])
        vocab = build_vocabulary(corpus, min_df=2, max_df=1.0)
        assert sorted(vocab.terms.values()) == list(range(len(vocab)))

    def test_empty_corpus_rejected(self):
        with pytest.raises(CorpusError):
            build_vocabulary(Corpus([]), min_df=2, max_df=0.95)

    def test_empty_vocabulary_rejected(self, tiny_corpus):
        # all terms in tiny_corpus have df 1
        with pytest.raises(CorpusError, match="empty"):
            build_vocabulary(tiny_corpus, min_df=2, max_df=0.95)
