"""Seeded synthetic mini-dataset with planted relevance and topic blocks.

Real corpora from the retrieval literature cannot ship inside this repo,
so tests and demos use a generated stand-in: each query owns a set of
"theme" tokens plus several relevant document blocks (two large, two
small) whose vocabularies mix theme tokens with block-specific tokens.
Distractor blocks use disjoint vocabularies. Token strings are chosen so
stemming and stopword removal leave them untouched, which keeps lexical,
dense, and topic-representation views of a document aligned.

The generator writes a corpus, queries, TREC-style qrels, precomputed
embeddings (via the hashed provider), and a ready-to-run pipeline config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Document, save_corpus
from .embeddings import EmbeddingStore, HashedTextEmbedder, save_embeddings


@dataclass
class MiniDatasetParams:
    n_docs: int = 500
    n_queries: int = 2
    dim: int = 128
    seed: int = 42
    provider_seed: int = 7
    n_theme_tokens: int = 8
    themes_per_block: int = 6
    large_block_docs: int = 30
    small_block_docs: int = 8
    weak_docs_per_query: int = 10
    distractor_block_tokens: int = 12
    n_select: int = 100
    pool_size: int = 250
    lda_sweeps: int = 100


def _doc_text(rng: np.random.Generator, pools: list[tuple[list[str], float]],
              fillers: list[str]) -> str:
    """Token sequence mixing weighted token pools plus corpus-wide filler."""
    tokens: list[str] = []
    for pool, mean_count in pools:
        for token in pool:
            tokens.extend([token] * (1 + int(rng.poisson(mean_count))))
    tokens.extend(rng.choice(fillers, size=3).tolist())
    rng.shuffle(tokens)
    return " ".join(tokens)


def generate_mini_dataset(out_dir: str | Path, params: MiniDatasetParams | None = None) -> dict:
    """Write the dataset files into out_dir and return their paths."""
    params = params or MiniDatasetParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(params.seed)

    fillers = [f"f{j}x" for j in range(4)]
    queries: list[tuple[str, str]] = []
    docs: list[Document] = []
    grades: dict[tuple[str, str], int] = {}

    def add_doc(text: str, title_pool: list[str] | None) -> str:
        doc_id = f"doc{len(docs):04d}"
        title = None
        if title_pool and len(docs) % 2 == 0:
            title = " ".join(rng.choice(title_pool, size=2, replace=False).tolist())
        docs.append(Document(id=doc_id, text=text, title=title))
        return doc_id

    for qi in range(params.n_queries):
        theme = [f"q{qi}t{j}x" for j in range(params.n_theme_tokens)]
        query_id = f"q{qi}"
        queries.append((query_id, " ".join(theme)))

        block_sizes = [params.large_block_docs, params.large_block_docs,
                       params.small_block_docs, params.small_block_docs]
        for bi, size in enumerate(block_sizes):
            theme_subset = rng.choice(
                theme, size=params.themes_per_block, replace=False
            ).tolist()
            specific = [f"q{qi}b{bi}w{j}x" for j in range(5)]
            for _ in range(size):
                text = _doc_text(rng, [(theme_subset, 4.0), (specific, 1.0)], fillers)
                doc_id = add_doc(text, theme_subset + specific)
                grades[(query_id, doc_id)] = 2
        for _ in range(params.weak_docs_per_query):
            weak_theme = rng.choice(theme, size=2, replace=False).tolist()
            noise = [f"n{qi}w{j}x" for j in range(6)]
            text = _doc_text(rng, [(weak_theme, 0.5), (noise, 2.0)], fillers)
            doc_id = add_doc(text, None)
            grades[(query_id, doc_id)] = 1

    n_planted = len(docs)
    n_distractors = params.n_docs - n_planted
    if n_distractors < 0:
        raise ValueError(f"n_docs={params.n_docs} too small for planted blocks ({n_planted})")
    n_blocks = 12
    per_block = [n_distractors // n_blocks] * n_blocks
    for i in range(n_distractors % n_blocks):
        per_block[i] += 1
    for bi, size in enumerate(per_block):
        vocab = [f"d{bi}w{j}x" for j in range(params.distractor_block_tokens)]
        for _ in range(size):
            text = _doc_text(rng, [(vocab, 2.0)], fillers)
            add_doc(text, vocab[:4])

    order = rng.permutation(len(docs))
    docs = [docs[i] for i in order]
    corpus = Corpus(docs)

    provider = HashedTextEmbedder(dim=params.dim, seed=params.provider_seed)
    doc_store = EmbeddingStore(dim=params.dim)
    for doc in corpus:
        doc_store.add(doc.id, provider.embed([doc.indexed_text()])[0])
    query_store = EmbeddingStore(dim=params.dim)
    for query_id, text in queries:
        query_store.add(query_id, provider.embed([text])[0])

    paths = {
        "corpus": out_dir / "corpus.jsonl",
        "queries": out_dir / "queries.jsonl",
        "qrels": out_dir / "qrels.txt",
        "doc_vectors": out_dir / "doc_vectors.f32",
        "doc_ids": out_dir / "doc_ids.txt",
        "query_vectors": out_dir / "query_vectors.f32",
        "query_ids": out_dir / "query_ids.txt",
        "config": out_dir / "mini_config.json",
    }
    save_corpus(corpus, paths["corpus"])
    with paths["queries"].open("w", encoding="utf-8") as fh:
        for query_id, text in queries:
            fh.write(json.dumps({"id": query_id, "text": text}) + "\n")
    with paths["qrels"].open("w", encoding="utf-8") as fh:
        for (query_id, doc_id), grade in sorted(grades.items()):
            fh.write(f"{query_id} 0 {doc_id} {grade}\n")
    save_embeddings(doc_store, paths["doc_vectors"], paths["doc_ids"])
    save_embeddings(query_store, paths["query_vectors"], paths["query_ids"])

    config = {
        "version": 1,
        "corpus": "corpus.jsonl",
        "queries": "queries.jsonl",
        "qrels": "qrels.txt",
        "embeddings": {
            "doc_vectors": "doc_vectors.f32",
            "doc_ids": "doc_ids.txt",
            "query_vectors": "query_vectors.f32",
            "query_ids": "query_ids.txt",
            "provider": {"type": "hashed", "dim": params.dim, "seed": params.provider_seed},
        },
        "strategies": ["random_uniform", "keyword", "dense", "direct_retrieval"],
        "strategy_config": {"n_select": params.n_select, "pool_size": params.pool_size},
        "models": ["lda", "cluster"],
        "lda": {"sweeps": params.lda_sweeps, "eta": 0.01, "fallback_k": 20},
        "cluster": {"min_cluster_size": 5, "k_min": 2, "k_max": 30},
        "thresholds": {"relevant": 0.5, "match": 0.7},
        "base_seed": 42,
    }
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return {name: str(path) for name, path in paths.items()}
