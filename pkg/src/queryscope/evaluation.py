"""Relevance, diversity, coverage, and IR validation metrics.

Relevancy is the mean query-topic cosine; diversity the mean pairwise
cosine distance between topic embeddings; coverage the fraction of one
strategy's query-relevant topics matched one-to-one (optimal assignment,
similarity >= match threshold) by another's. Per-query nulls (fewer than
2 topics, empty relevant sets) are skipped in cross-query means and the
skip counts reported alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import solve_assignment
from .errors import EvaluationError
from .ranking import RankedList
from .topics import Topic, TopicSet

REL_THRESHOLD = 0.5
MATCH_THRESHOLD = 0.7


@dataclass
class Qrels:
    """Graded relevance judgments; unjudged pairs count as grade 0."""

    judgments: dict[tuple[str, str], int] = field(default_factory=dict)

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.judgments.get((query_id, doc_id), 0)

    def relevant_ids(self, query_id: str, min_grade: int = 2) -> set[str]:
        return {
            doc for (qid, doc), grade in self.judgments.items()
            if qid == query_id and grade >= min_grade
        }


def load_qrels(path: str | Path) -> Qrels:
    """Parse whitespace-separated 'query_id 0 doc_id grade' lines."""
    path = Path(path)
    if not path.is_file():
        raise EvaluationError(f"qrels file not found: {path}")
    judgments: dict[tuple[str, str], int] = {}
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise EvaluationError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        query_id, _, doc_id, grade_str = parts
        try:
            grade = int(grade_str)
        except ValueError:
            raise EvaluationError(f"{path}:{lineno}: grade {grade_str!r} is not an integer") from None
        if grade not in (0, 1, 2):
            raise EvaluationError(f"{path}:{lineno}: grade must be 0, 1, or 2, got {grade}")
        if grade > 0:
            judgments[(query_id, doc_id)] = grade
    return Qrels(judgments)


def _topic_unit_vector(topic: Topic) -> np.ndarray:
    vec = topic.representation_embedding
    if vec is None:
        raise EvaluationError(f"topic {topic.id} has no representation embedding")
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EvaluationError(f"topic {topic.id} has a zero-norm embedding")
    return vec / norm


def _unit(vector: np.ndarray) -> np.ndarray:
    vec = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EvaluationError("zero-norm query vector")
    return vec / norm


def relevancy_score(query_vector: np.ndarray, topic_set: TopicSet) -> float:
    """Mean cosine between the query and each topic representation."""
    if not topic_set.topics:
        raise EvaluationError("relevancy undefined for an empty topic set")
    query = _unit(query_vector)
    sims = [float(query @ _topic_unit_vector(t)) for t in topic_set.topics]
    return float(np.mean(sims))


def relevant_subset(
    topic_set: TopicSet, query_vector: np.ndarray, threshold: float = REL_THRESHOLD
) -> TopicSet:
    """Topics with query cosine >= threshold, original order preserved."""
    query = _unit(query_vector)
    kept = [t for t in topic_set.topics if float(query @ _topic_unit_vector(t)) >= threshold]
    return TopicSet(
        query_id=topic_set.query_id, strategy=topic_set.strategy, model=topic_set.model,
        topics=kept, outlier_doc_ids=list(topic_set.outlier_doc_ids),
    )


def diversity_score(topic_set: TopicSet) -> float | None:
    """Mean pairwise (1 - cosine) over topics; None with fewer than 2."""
    if len(topic_set.topics) < 2:
        return None
    units = [_topic_unit_vector(t) for t in topic_set.topics]
    dists = [
        1.0 - float(units[i] @ units[j])
        for i in range(len(units))
        for j in range(i + 1, len(units))
    ]
    return float(np.mean(dists))


def _pairwise_cosine(topics_a: list[Topic], topics_b: list[Topic]) -> np.ndarray:
    """Elementwise cosine matrix; entry (i, j) is bitwise-transposable."""
    units_a = [_topic_unit_vector(t) for t in topics_a]
    units_b = [_topic_unit_vector(t) for t in topics_b]
    sim = np.empty((len(units_a), len(units_b)), dtype=np.float64)
    for i, ua in enumerate(units_a):
        for j, ub in enumerate(units_b):
            sim[i, j] = float(np.dot(ua, ub))
    return sim


def matched_pair_count(similarity: np.ndarray, threshold: float) -> int:
    """Pairs at or above threshold in the optimal one-to-one matching.

    Sub-threshold entries are zeroed before the assignment so the
    optimizer cannot route through inadmissible pairs; the matrix is
    solved in a canonical orientation (the lexicographically smaller of
    M and M.T) so the count is identical for (A, B) and (B, A).
    """
    matrix = np.asarray(similarity, dtype=np.float64)
    if matrix.size == 0:
        return 0
    zeroed = np.where(matrix >= threshold, matrix, 0.0)
    flipped = zeroed.T
    key = (zeroed.shape, zeroed.tobytes())
    key_t = (flipped.shape, flipped.tobytes())
    if key_t < key:
        pairs = [(c, r) for r, c in solve_assignment(flipped)]
    else:
        pairs = solve_assignment(zeroed)
    return sum(1 for r, c in pairs if zeroed[r, c] >= threshold)


def coverage_score(
    topics_a: TopicSet,
    topics_b: TopicSet,
    query_vector: np.ndarray,
    match_threshold: float = MATCH_THRESHOLD,
    rel_threshold: float = REL_THRESHOLD,
) -> float | None:
    """Fraction of B's query-relevant topics matched by A's.

    None when B has no relevant topics (no denominator); 0.0 when A has
    none but B does.
    """
    rel_a = relevant_subset(topics_a, query_vector, rel_threshold).topics
    rel_b = relevant_subset(topics_b, query_vector, rel_threshold).topics
    if not rel_b:
        return None
    if not rel_a:
        return 0.0
    sim = _pairwise_cosine(rel_a, rel_b)
    return matched_pair_count(sim, match_threshold) / len(rel_b)


def ir_metrics(
    ranked: RankedList,
    qrels: Qrels,
    k: int = 20,
    n: int = 1000,
    rel_grade: int = 2,
) -> tuple[float, float | None]:
    """(precision@k, recall@n) against docs judged at or above rel_grade.

    Precision keeps denominator k even when the list is shorter; recall
    is None for queries with no relevant documents.
    """
    if len(ranked) < 1:
        raise EvaluationError("IR metrics need a non-empty ranked list")
    relevant = qrels.relevant_ids(ranked.query_id, min_grade=rel_grade)
    top_k = set(ranked.doc_ids()[:k])
    top_n = set(ranked.doc_ids()[:n])
    precision = len(top_k & relevant) / k
    recall = len(top_n & relevant) / len(relevant) if relevant else None
    return precision, recall


@dataclass
class MetricRecord:
    """Per (query, strategy, model) topic-quality measurements."""

    query_id: str
    strategy: str
    model: str
    relevancy: float
    overall_diversity: float | None
    relevant_diversity: float | None
    n_topics: int
    n_relevant_topics: int

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "strategy": self.strategy,
            "model": self.model,
            "relevancy": self.relevancy,
            "overall_diversity": self.overall_diversity,
            "relevant_diversity": self.relevant_diversity,
            "n_topics": self.n_topics,
            "n_relevant_topics": self.n_relevant_topics,
        }


def compute_metric_record(
    query_vector: np.ndarray,
    topic_set: TopicSet,
    rel_threshold: float = REL_THRESHOLD,
) -> MetricRecord:
    relevant = relevant_subset(topic_set, query_vector, rel_threshold)
    return MetricRecord(
        query_id=topic_set.query_id,
        strategy=topic_set.strategy,
        model=topic_set.model,
        relevancy=relevancy_score(query_vector, topic_set),
        overall_diversity=diversity_score(topic_set),
        relevant_diversity=diversity_score(relevant),
        n_topics=topic_set.n_topics(),
        n_relevant_topics=relevant.n_topics(),
    )


@dataclass
class CoverageMatrix:
    """Cross-strategy coverage, averaged over queries with skip counts.

    values[i][j] is mean coverage(strategy_i -> strategy_j); entry (i, j)
    is None when every query skipped (strategy_j never had relevant
    topics). skipped[i][j] counts the skipped queries.
    """

    strategies: list[str]
    threshold: float
    values: list[list[float | None]]
    skipped: list[list[int]]

    def to_dict(self) -> dict:
        return {
            "strategies": self.strategies,
            "threshold": self.threshold,
            "values": self.values,
            "skipped": self.skipped,
        }


def coverage_matrix(
    strategies: list[str],
    topic_sets: dict[tuple[str, str], TopicSet],
    query_vectors: dict[str, np.ndarray],
    match_threshold: float = MATCH_THRESHOLD,
    rel_threshold: float = REL_THRESHOLD,
) -> CoverageMatrix:
    """Average coverage(S_i -> S_j) over all queries present for both.

    topic_sets maps (query_id, strategy) to the topic set for one model.
    """
    query_ids = sorted(query_vectors)
    n = len(strategies)
    values: list[list[float | None]] = [[None] * n for _ in range(n)]
    skipped = [[0] * n for _ in range(n)]
    for i, strat_a in enumerate(strategies):
        for j, strat_b in enumerate(strategies):
            cell: list[float] = []
            for qid in query_ids:
                set_a = topic_sets.get((qid, strat_a))
                set_b = topic_sets.get((qid, strat_b))
                if set_a is None or set_b is None:
                    skipped[i][j] += 1
                    continue
                cov = coverage_score(set_a, set_b, query_vectors[qid],
                                     match_threshold, rel_threshold)
                if cov is None:
                    skipped[i][j] += 1
                else:
                    cell.append(cov)
            values[i][j] = float(np.mean(cell)) if cell else None
    return CoverageMatrix(strategies=list(strategies), threshold=match_threshold,
                          values=values, skipped=skipped)


def mean_and_sample_std(values: list[float]) -> tuple[float, float | None]:
    """Mean and sample (n-1) standard deviation; std is None for n < 2."""
    if not values:
        raise EvaluationError("cannot aggregate an empty value list")
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1))


def mean_skipping_none(values: list[float | None]) -> tuple[float | None, int]:
    """Mean over non-None values plus the skipped count."""
    present = [v for v in values if v is not None]
    skipped = len(values) - len(present)
    if not present:
        return None, skipped
    return float(np.mean(present)), skipped
