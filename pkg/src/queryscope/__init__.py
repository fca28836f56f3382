"""Query-driven corpus selection with topic-quality evaluation.

Select fixed-size, query-relevant document subsets from a corpus with
lexical, dense, hybrid, and randomized strategies; run topic models over
the selections; and score the resulting topic sets for relevancy,
diversity, and cross-strategy coverage.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Corpus,
    Document,
    Vocabulary,
    build_vocabulary,
    load_corpus,
    preprocess_text,
    save_corpus,
)
from .dense import dense_search  # noqa: F401
from .embeddings import (  # noqa: F401
    EmbeddingRequest,
    EmbeddingStore,
    HashedTextEmbedder,
    HttpEmbeddingProvider,
    cosine_similarity,
    embed_texts,
    load_precomputed_embeddings,
    save_embeddings,
)
from .errors import (  # noqa: F401
    ConfigError,
    CorpusError,
    EmbeddingError,
    EvaluationError,
    QueryscopeError,
    SearchError,
    TopicModelError,
)
from .evaluation import (  # noqa: F401
    CoverageMatrix,
    MetricRecord,
    Qrels,
    compute_metric_record,
    coverage_matrix,
    coverage_score,
    diversity_score,
    ir_metrics,
    load_qrels,
    relevancy_score,
    relevant_subset,
)
from .assignment import solve_assignment  # noqa: F401
from .fusion import fuse_rrf, fuse_simple_sum, fuse_weighted  # noqa: F401
from .lda import fit_lda  # noqa: F401
from .lexical import Bm25Index, bm25_search, build_bm25_index  # noqa: F401
from .ranking import RankedList, ranked_from_scores  # noqa: F401
from .strategies import (  # noqa: F401
    STRATEGY_NAMES,
    RetrievalResources,
    Selection,
    StrategyConfig,
    derive_seed,
    extract_query_keywords,
    rerank_mmr,
    run_strategy,
    select_random_uniform,
    select_query_expansion,
    select_retrieval_random,
)
from .topics import (  # noqa: F401
    Topic,
    TopicSet,
    ctfidf_top_words,
    embed_topic_representations,
    fit_cluster_topic_model,
    import_topic_set,
    match_topic_counts,
)
