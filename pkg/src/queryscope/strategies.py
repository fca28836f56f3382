"""Document selection strategies: fixed-size subsets of a corpus per query.

Every strategy is deterministic given (config, corpus, embeddings): random
draws use a per-task seed derived by hashing base_seed, query id, and
strategy name, so tasks can run in any order or in parallel without
changing results.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, STOPWORDS
from .dense import dense_search
from .embeddings import EmbeddingCache, EmbeddingRequest, EmbeddingStore, embed_texts
from .errors import SearchError
from .fusion import fuse_rrf, fuse_simple_sum, fuse_weighted
from .lexical import Bm25Index, bm25_search
from .ranking import RankedList

logger = logging.getLogger(__name__)

STRATEGY_NAMES = (
    "random_uniform",
    "keyword",
    "dense",
    "direct_retrieval",
    "hybrid_rrf",
    "hybrid_weighted",
    "direct_mmr",
    "query_expansion",
    "retrieval_random",
)

# Strategies whose selection order is a meaningful relevance ranking.
RANKED_STRATEGIES = frozenset(STRATEGY_NAMES) - {"random_uniform", "retrieval_random"}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def derive_seed(base_seed: int, *parts: str) -> int:
    """64-bit FNV-1a hash of 'base_seed|part|part|...'."""
    h = _FNV_OFFSET
    for byte in "|".join([str(base_seed), *parts]).encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass
class StrategyConfig:
    name: str = "direct_retrieval"
    n_select: int = 1000
    pool_size: int = 5000
    rrf_k: float = 60.0
    weight_w: float = 0.5
    mmr_lambda: float = 0.3
    n_keywords: int = 5
    kw_diversity: float = 0.7
    w_orig: float = 0.5
    w_kw: float = 0.1
    base_seed: int = 42
    fusion_norm: str = "max"

    def __post_init__(self) -> None:
        if self.n_select < 1:
            raise SearchError(f"n_select must be >= 1, got {self.n_select}")
        if self.n_select > self.pool_size:
            raise SearchError(
                f"n_select ({self.n_select}) must not exceed pool_size ({self.pool_size})"
            )
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise SearchError(f"mmr_lambda must be in [0, 1], got {self.mmr_lambda}")
        if not 0.0 <= self.weight_w <= 1.0:
            raise SearchError(f"weight_w must be in [0, 1], got {self.weight_w}")
        if self.rrf_k <= 0:
            raise SearchError(f"rrf_k must be positive, got {self.rrf_k}")
        total = self.w_orig + self.n_keywords * self.w_kw
        if abs(total - 1.0) > 1e-9:
            logger.warning(
                "query expansion weights sum to %.3g, not 1.0 (w_orig=%.3g, %d keywords at %.3g)",
                total, self.w_orig, self.n_keywords, self.w_kw,
            )

    def with_name(self, name: str) -> "StrategyConfig":
        cfg = StrategyConfig(**{**asdict(self), "name": name})
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Selection:
    """Ordered doc ids chosen by one strategy for one query."""

    query_id: str
    strategy: str
    doc_ids: list[str]
    seed_used: int | None = None
    shortfall: bool = False
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise SearchError(
                f"selection for ({self.query_id}, {self.strategy}) contains duplicate ids"
            )

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "strategy": self.strategy,
            "config": self.config,
            "doc_ids": self.doc_ids,
            "seed_used": self.seed_used,
            "shortfall": self.shortfall,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Selection":
        raw = json.loads(Path(path).read_text("utf-8"))
        return cls(
            query_id=raw["query_id"],
            strategy=raw["strategy"],
            doc_ids=list(raw["doc_ids"]),
            seed_used=raw.get("seed_used"),
            shortfall=bool(raw.get("shortfall", False)),
            config=raw.get("config", {}),
        )


def _make_selection(
    config: StrategyConfig, query_id: str, doc_ids: list[str], seed_used: int | None = None
) -> Selection:
    return Selection(
        query_id=query_id,
        strategy=config.name,
        doc_ids=doc_ids,
        seed_used=seed_used,
        shortfall=len(doc_ids) < config.n_select,
        config=config.to_dict(),
    )


def select_random_uniform(
    corpus: Corpus, config: StrategyConfig, query_id: str
) -> Selection:
    """Uniform sample without replacement from the full corpus."""
    if len(corpus) == 0:
        raise SearchError("cannot sample from an empty corpus")
    seed = derive_seed(config.base_seed, query_id, config.name)
    rng = np.random.default_rng(seed)
    ids = corpus.ids()
    order = rng.permutation(len(ids))[: config.n_select]
    return _make_selection(config, query_id, [ids[i] for i in order], seed_used=seed)


def rerank_mmr(
    candidates: RankedList,
    query_vector: np.ndarray,
    store: EmbeddingStore,
    mmr_lambda: float,
    n_select: int,
) -> list[str]:
    """Greedy maximal-marginal-relevance pick over a candidate ranking.

    Picks argmax of lambda*sim(d, query) - (1-lambda)*max sim(d, selected),
    seeding with the most query-similar candidate; exact score ties break
    by ascending doc id. Returns doc ids in pick order.
    """
    if not candidates.entries:
        raise SearchError("MMR reranking needs a non-empty candidate list")
    # Candidates are processed in ascending-id order so that argmax (which
    # takes the first maximum) resolves exact score ties by doc id.
    doc_ids = sorted(candidates.doc_ids())
    matrix = store.matrix(doc_ids).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise SearchError("candidate with zero-norm embedding in MMR pool")
    unit = matrix / norms[:, None]
    query = np.asarray(query_vector, dtype=np.float64)
    q_norm = np.linalg.norm(query)
    if q_norm == 0.0:
        raise SearchError("query vector has zero norm")
    sim_q = unit @ (query / q_norm)

    n = len(doc_ids)
    picked: list[int] = []
    mask = np.zeros(n, dtype=bool)  # True once picked

    first = int(np.argmax(sim_q))
    picked.append(first)
    mask[first] = True
    max_sim_sel = unit @ unit[first]

    while len(picked) < min(n_select, n):
        scores = mmr_lambda * sim_q - (1.0 - mmr_lambda) * max_sim_sel
        scores[mask] = -np.inf
        nxt = int(np.argmax(scores))
        picked.append(nxt)
        mask[nxt] = True
        np.maximum(max_sim_sel, unit @ unit[nxt], out=max_sim_sel)
    return [doc_ids[i] for i in picked]


def extract_query_keywords(
    query_text: str,
    provider,
    n_keywords: int = 5,
    diversity: float = 0.7,
    cache: EmbeddingCache | None = None,
) -> list[str]:
    """Unigram/bigram keyword candidates from the query, picked by MMR.

    Candidates are unstemmed surface forms (keywords get re-embedded as
    text, so stemming would distort them); the MMR relevance weight is
    1 - diversity. Returns all candidates when there are at most
    n_keywords of them.
    """
    tokens = [t for t in _surface_tokens(query_text) if t not in STOPWORDS]
    candidates: list[str] = []
    seen: set[str] = set()
    for gram in tokens + [" ".join(tokens[i : i + 2]) for i in range(len(tokens) - 1)]:
        if gram and gram not in seen:
            seen.add(gram)
            candidates.append(gram)
    if not candidates:
        raise SearchError(f"no keyword candidates in query {query_text!r} after stopword removal")
    if len(candidates) <= n_keywords:
        return candidates

    candidates.sort()  # lexicographic order makes argmax tie-breaks deterministic
    vectors = embed_texts(
        EmbeddingRequest(texts=[query_text] + candidates,
                         cache_keys=["query"] + [f"kw:{c}" for c in candidates]),
        provider, cache=cache,
    )
    query_vec = np.asarray(vectors[0], dtype=np.float64)
    cand = np.asarray(vectors[1:], dtype=np.float64)
    cand_norms = np.linalg.norm(cand, axis=1)
    q_norm = np.linalg.norm(query_vec)
    if q_norm == 0.0 or np.any(cand_norms == 0.0):
        raise SearchError("zero-norm embedding among keyword candidates")
    unit = cand / cand_norms[:, None]
    sim_q = unit @ (query_vec / q_norm)

    relevance = 1.0 - diversity
    n = len(candidates)
    mask = np.zeros(n, dtype=bool)
    picked: list[int] = []

    first = int(np.argmax(sim_q))
    picked.append(first)
    mask[first] = True
    max_sim_sel = unit @ unit[first]
    while len(picked) < n_keywords:
        scores = relevance * sim_q - diversity * max_sim_sel
        scores[mask] = -np.inf
        nxt = int(np.argmax(scores))
        picked.append(nxt)
        mask[nxt] = True
        np.maximum(max_sim_sel, unit @ unit[nxt], out=max_sim_sel)
    return [candidates[i] for i in picked]


def _surface_tokens(text: str) -> list[str]:
    out, cur = [], []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


@dataclass
class RetrievalResources:
    """Shared immutable inputs the strategy dispatcher draws from."""

    corpus: Corpus
    bm25: Bm25Index | None = None
    store: EmbeddingStore | None = None
    provider: object | None = None
    cache: EmbeddingCache | None = None

    def require_bm25(self, strategy: str) -> Bm25Index:
        if self.bm25 is None:
            raise SearchError(f"strategy {strategy!r} needs a BM25 index")
        return self.bm25

    def require_store(self, strategy: str) -> EmbeddingStore:
        if self.store is None:
            raise SearchError(f"strategy {strategy!r} needs document embeddings")
        return self.store


def direct_retrieval_ranking(
    config: StrategyConfig,
    query_id: str,
    query_text: str,
    query_vector: np.ndarray,
    resources: RetrievalResources,
    k: int,
) -> RankedList:
    """Simple-sum fusion of the per-signal top-pool_size rankings."""
    bm25 = resources.require_bm25(config.name)
    store = resources.require_store(config.name)
    try:
        lexical = bm25_search(bm25, query_text, config.pool_size, query_id=query_id)
    except SearchError:
        # Stopword-only or out-of-vocabulary query text: lexical side is empty.
        lexical = RankedList([], query_id=query_id, source="bm25")
    semantic = dense_search(store, query_vector, config.pool_size, query_id=query_id)
    fused = fuse_simple_sum(lexical, semantic, normalization=config.fusion_norm)
    return fused.top(k)


def select_retrieval_random(
    config: StrategyConfig,
    query_id: str,
    query_text: str,
    query_vector: np.ndarray,
    resources: RetrievalResources,
) -> Selection:
    """Uniform sample of n_select ids from the direct-retrieval pool."""
    pool = direct_retrieval_ranking(
        config, query_id, query_text, query_vector, resources, config.pool_size
    )
    if not pool.entries:
        raise SearchError(f"empty retrieval pool for query {query_id!r}")
    seed = derive_seed(config.base_seed, query_id, config.name)
    rng = np.random.default_rng(seed)
    ids = pool.doc_ids()
    order = rng.permutation(len(ids))[: config.n_select]
    return _make_selection(config, query_id, [ids[i] for i in order], seed_used=seed)


def select_query_expansion(
    config: StrategyConfig,
    query_id: str,
    query_text: str,
    query_vector: np.ndarray,
    resources: RetrievalResources,
) -> Selection:
    """Fuse direct retrievals for the query and its extracted keywords.

    The original query's list and each keyword's list enter a weighted
    reciprocal-rank fusion (w_orig for the query, w_kw per keyword).
    Falls back to plain direct retrieval when no keywords can be
    extracted.
    """
    if resources.provider is None:
        raise SearchError("query_expansion needs an embedding provider for keywords")
    try:
        keywords = extract_query_keywords(
            query_text, resources.provider,
            n_keywords=config.n_keywords, diversity=config.kw_diversity,
            cache=resources.cache,
        )
    except SearchError as exc:
        logger.warning("keyword extraction failed (%s); falling back to direct retrieval", exc)
        fused = direct_retrieval_ranking(
            config, query_id, query_text, query_vector, resources, config.n_select
        )
        return _make_selection(config, query_id, fused.doc_ids())

    kw_vectors = embed_texts(
        EmbeddingRequest(texts=keywords, cache_keys=[f"kw:{k}" for k in keywords]),
        resources.provider, cache=resources.cache,
    )
    lists = [
        direct_retrieval_ranking(
            config, query_id, query_text, query_vector, resources, config.pool_size
        )
    ]
    for kw, vec in zip(keywords, kw_vectors):
        lists.append(
            direct_retrieval_ranking(config, query_id, kw, vec, resources, config.pool_size)
        )
    weights = [config.w_orig] + [config.w_kw] * len(keywords)
    if abs(sum(weights) - 1.0) > 1e-9:
        logger.warning(
            "query %s: expansion fused %d retrievals with weights summing to %.3g",
            query_id, len(lists), sum(weights),
        )
    fused = fuse_rrf(lists, rrf_k=config.rrf_k, weights=weights)
    if not fused.entries:
        raise SearchError(f"all expansion retrievals empty for query {query_id!r}")
    return _make_selection(config, query_id, fused.top(config.n_select).doc_ids())


def run_strategy(
    config: StrategyConfig,
    query_id: str,
    query_text: str,
    resources: RetrievalResources,
    query_vector: np.ndarray | None = None,
) -> Selection:
    """Dispatch to the configured strategy pipeline."""
    name = config.name
    if name not in STRATEGY_NAMES:
        raise SearchError(f"unknown strategy {name!r}; expected one of {STRATEGY_NAMES}")

    if name == "random_uniform":
        return select_random_uniform(resources.corpus, config, query_id)

    if name == "keyword":
        ranked = bm25_search(resources.require_bm25(name), query_text, config.n_select,
                             query_id=query_id)
        return _make_selection(config, query_id, ranked.doc_ids())

    if query_vector is None:
        raise SearchError(f"strategy {name!r} needs a query embedding")

    if name == "dense":
        ranked = dense_search(resources.require_store(name), query_vector, config.n_select,
                              query_id=query_id)
        return _make_selection(config, query_id, ranked.doc_ids())

    if name in ("direct_retrieval", "hybrid_rrf", "hybrid_weighted"):
        bm25 = resources.require_bm25(name)
        store = resources.require_store(name)
        try:
            lexical = bm25_search(bm25, query_text, config.pool_size, query_id=query_id)
        except SearchError:
            lexical = RankedList([], query_id=query_id, source="bm25")
        semantic = dense_search(store, query_vector, config.pool_size, query_id=query_id)
        if name == "direct_retrieval":
            fused = fuse_simple_sum(lexical, semantic, normalization=config.fusion_norm)
        elif name == "hybrid_rrf":
            fused = fuse_rrf([lexical, semantic], rrf_k=config.rrf_k)
        else:
            fused = fuse_weighted(lexical, semantic, config.weight_w,
                                  normalization=config.fusion_norm)
        return _make_selection(config, query_id, fused.top(config.n_select).doc_ids())

    if name == "direct_mmr":
        pool = direct_retrieval_ranking(
            config, query_id, query_text, query_vector, resources, config.pool_size
        )
        picked = rerank_mmr(pool, query_vector, resources.require_store(name),
                            config.mmr_lambda, config.n_select)
        return _make_selection(config, query_id, picked)

    if name == "query_expansion":
        return select_query_expansion(config, query_id, query_text, query_vector, resources)

    return select_retrieval_random(config, query_id, query_text, query_vector, resources)
