"""Topic sets, c-TF-IDF word scoring, and the clustering topic model.

A TopicSet is the unit the evaluation framework consumes, whatever
produced it: the built-in models here, or an external tool whose output
is imported through the topic-set JSON format.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Document, Vocabulary
from .embeddings import EmbeddingCache, EmbeddingRequest, EmbeddingStore, embed_texts
from .errors import TopicModelError

logger = logging.getLogger(__name__)

OUTLIER_TOPIC_ID = -1


@dataclass
class Topic:
    id: int
    doc_ids: list[str]
    top_words: list[str] | None = None
    description: str | None = None
    representation_embedding: np.ndarray | None = field(default=None, compare=False)

    def representation_text(self) -> str:
        if self.top_words:
            return " ".join(self.top_words)
        if self.description:
            return self.description
        raise TopicModelError(f"topic {self.id} has neither top words nor a description")


@dataclass
class TopicSet:
    query_id: str
    strategy: str
    model: str
    topics: list[Topic]
    outlier_doc_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        ids = [t.id for t in self.topics]
        if len(set(ids)) != len(ids):
            raise TopicModelError(f"duplicate topic ids in topic set: {ids}")
        if OUTLIER_TOPIC_ID in ids:
            raise TopicModelError(f"topic id {OUTLIER_TOPIC_ID} is reserved for outliers")

    def n_topics(self) -> int:
        return len(self.topics)

    def assigned_doc_ids(self) -> list[str]:
        out = [d for t in self.topics for d in t.doc_ids]
        out.extend(self.outlier_doc_ids)
        return out

    def validate_partition(self, selected_ids: list[str]) -> None:
        """Every selected doc in exactly one topic or in outliers."""
        assigned = self.assigned_doc_ids()
        if len(set(assigned)) != len(assigned):
            raise TopicModelError("a document is assigned to more than one topic")
        if set(assigned) != set(selected_ids):
            missing = set(selected_ids) - set(assigned)
            extra = set(assigned) - set(selected_ids)
            raise TopicModelError(
                f"topic set does not partition the selection "
                f"(missing={sorted(missing)[:5]}, extra={sorted(extra)[:5]})"
            )

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "strategy": self.strategy,
            "model": self.model,
            "topics": [
                {
                    "id": t.id,
                    "top_words": t.top_words,
                    "description": t.description,
                    "doc_ids": t.doc_ids,
                }
                for t in self.topics
            ],
            "outlier_doc_ids": self.outlier_doc_ids,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def import_topic_set(path: str | Path, selection_ids: list[str] | None = None) -> TopicSet:
    """Load and validate a topic-set JSON file.

    Doc ids outside the parent selection are retained with a warning, so
    externally generated topic sets survive import even when the external
    tool analyzed extra documents. Schema violations raise.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise TopicModelError(f"cannot read topic set {path}: {exc}") from None
    for key in ("query_id", "strategy", "model", "topics"):
        if key not in raw:
            raise TopicModelError(f"{path}: missing required key {key!r}")
    topics = []
    for i, entry in enumerate(raw["topics"]):
        if not isinstance(entry, dict) or "id" not in entry:
            raise TopicModelError(f"{path}: topic #{i} is missing an id")
        if not isinstance(entry["id"], int):
            raise TopicModelError(f"{path}: topic #{i} id must be an integer")
        top_words = entry.get("top_words")
        description = entry.get("description")
        if not top_words and not description:
            raise TopicModelError(
                f"{path}: topic {entry['id']} needs top_words or a description"
            )
        if top_words is not None and (
            not isinstance(top_words, list) or not all(isinstance(w, str) for w in top_words)
        ):
            raise TopicModelError(f"{path}: topic {entry['id']} top_words must be strings")
        topics.append(
            Topic(
                id=entry["id"],
                doc_ids=[str(d) for d in entry.get("doc_ids", [])],
                top_words=list(top_words) if top_words else None,
                description=description,
            )
        )
    topic_set = TopicSet(
        query_id=str(raw["query_id"]),
        strategy=str(raw["strategy"]),
        model=str(raw["model"]),
        topics=topics,
        outlier_doc_ids=[str(d) for d in raw.get("outlier_doc_ids", [])],
    )
    if selection_ids is not None:
        unknown = sorted(set(topic_set.assigned_doc_ids()) - set(selection_ids))
        if unknown:
            logger.warning(
                "%s: %d doc ids not in the parent selection (kept): %s%s",
                path, len(unknown), unknown[:5], "..." if len(unknown) > 5 else "",
            )
    return topic_set


def ctfidf_top_words(
    clusters: list[list[Document]], vocabulary: Vocabulary, top_n: int = 10
) -> list[list[str]]:
    """Top class-discriminating terms per cluster.

    Each cluster's documents are concatenated into one pseudo-document;
    weight(t, c) = tf(t, c) * ln(1 + A / f(t)) with A the average number
    of term occurrences per class and f(t) the term's frequency across
    all classes. Ties order lexicographically.
    """
    if any(not cluster for cluster in clusters):
        raise TopicModelError("ctfidf_top_words requires non-empty clusters")
    n_terms = len(vocabulary)
    tf = np.zeros((len(clusters), n_terms), dtype=np.float64)
    for c, cluster in enumerate(clusters):
        for doc in cluster:
            for term_id in vocabulary.doc_term_ids(doc):
                tf[c, term_id] += 1.0
    freq = tf.sum(axis=0)
    total = float(freq.sum())
    avg_per_class = total / len(clusters) if len(clusters) else 0.0
    terms = vocabulary.term_list()
    results: list[list[str]] = []
    for c in range(len(clusters)):
        if tf[c].sum() == 0:
            logger.warning("cluster %d shares no terms with the vocabulary", c)
            results.append([])
            continue
        scored = [
            (terms[t], tf[c, t] * math.log(1.0 + avg_per_class / freq[t]))
            for t in range(n_terms)
            if tf[c, t] > 0
        ]
        scored.sort(key=lambda item: (-item[1], item[0]))
        results.append([term for term, _ in scored[:top_n]])
    return results


def _spherical_kmeans(
    unit: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100
) -> np.ndarray:
    """Labels from k-means on the unit sphere (cosine objective).

    Greedy k-means++ style seeding; assignment ties go to the lowest
    centroid index, per-iteration, so results depend only on the rng
    state and the input order.
    """
    n = unit.shape[0]
    centroids = np.empty((k, unit.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = unit[first]
    closest = unit @ centroids[0]
    for j in range(1, k):
        weights = np.maximum(1.0 - closest, 0.0)
        total = weights.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(weights), rng.random() * total))
            idx = min(idx, n - 1)
        centroids[j] = unit[idx]
        np.maximum(closest, unit @ centroids[j], out=closest)

    labels = np.argmax(unit @ centroids.T, axis=1)
    for _ in range(max_iter):
        for j in range(k):
            members = unit[labels == j]
            if len(members) == 0:
                continue  # empty cluster keeps its previous centroid
            mean = members.sum(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0:
                centroids[j] = mean / norm
        new_labels = np.argmax(unit @ centroids.T, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def _mean_silhouette(dist: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient; singleton-cluster samples score 0."""
    n = len(labels)
    values = np.zeros(n)
    unique = np.unique(labels)
    if len(unique) < 2:
        return -1.0
    masks = {c: labels == c for c in unique}
    sizes = {c: int(masks[c].sum()) for c in unique}
    for i in range(n):
        own = labels[i]
        if sizes[own] <= 1:
            continue
        a = dist[i][masks[own]].sum() / (sizes[own] - 1)
        b = min(
            dist[i][masks[c]].mean() for c in unique if c != own
        )
        denom = max(a, b)
        values[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(values.mean())


def fit_cluster_topic_model(
    docs: list[Document],
    store: EmbeddingStore,
    vocabulary: Vocabulary,
    min_cluster_size: int = 5,
    k_min: int = 2,
    k_max: int = 30,
    seed: int = 0,
    query_id: str = "",
    strategy: str = "",
) -> TopicSet:
    """Partition documents by clustering their embeddings.

    The cluster count is chosen by scanning k in [k_min, k_max] for the
    best mean silhouette (cosine distance); clusters smaller than
    min_cluster_size dissolve into outliers, and surviving clusters get
    c-TF-IDF top words. Documents with no in-vocabulary terms go straight
    to outliers.
    """
    if len(docs) < 2 * min_cluster_size:
        raise TopicModelError(
            f"clustering needs at least {2 * min_cluster_size} documents, got {len(docs)}"
        )
    outliers: list[str] = []
    usable: list[Document] = []
    for doc in docs:
        if vocabulary.doc_term_ids(doc):
            usable.append(doc)
        else:
            outliers.append(doc.id)
    if len(usable) < max(k_min, 2):
        return TopicSet(query_id=query_id, strategy=strategy, model="cluster",
                        topics=[], outlier_doc_ids=[d.id for d in docs])

    matrix = store.matrix([d.id for d in usable]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise TopicModelError("zero-norm document embedding in clustering input")
    unit = matrix / norms[:, None]
    dist = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)

    best_labels: np.ndarray | None = None
    best_score = -np.inf
    upper = min(k_max, len(usable) - 1)
    for k in range(k_min, upper + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        labels = _spherical_kmeans(unit, k, rng)
        score = _mean_silhouette(dist, labels)
        if score > best_score:
            best_score = score
            best_labels = labels
    if best_labels is None:  # upper < k_min: too few docs to scan
        return TopicSet(query_id=query_id, strategy=strategy, model="cluster",
                        topics=[], outlier_doc_ids=[d.id for d in docs])

    clusters: dict[int, list[Document]] = {}
    for doc, label in zip(usable, best_labels):
        clusters.setdefault(int(label), []).append(doc)
    surviving = []
    for label in sorted(clusters):
        members = clusters[label]
        if len(members) < min_cluster_size:
            outliers.extend(d.id for d in members)
        else:
            surviving.append((label, members))
    # Topic ids by descending size, then original cluster label.
    surviving.sort(key=lambda item: (-len(item[1]), item[0]))
    word_lists = ctfidf_top_words([members for _, members in surviving], vocabulary)
    topics = [
        Topic(id=i, doc_ids=[d.id for d in members], top_words=words or None,
              description=None if words else "unlabeled cluster")
        for i, ((_, members), words) in enumerate(zip(surviving, word_lists))
    ]
    return TopicSet(query_id=query_id, strategy=strategy, model="cluster",
                    topics=topics, outlier_doc_ids=outliers)


def match_topic_counts(cluster_result: TopicSet | None, fallback_k: int = 20) -> int:
    """Topic count for a parametric model: copy the clustering count.

    Falls back to fallback_k when clustering is unavailable or found
    fewer than 2 topics.
    """
    if cluster_result is not None and cluster_result.n_topics() >= 2:
        return cluster_result.n_topics()
    return fallback_k


def embed_topic_representations(
    topic_set: TopicSet,
    provider,
    cache: EmbeddingCache | None = None,
) -> TopicSet:
    """Fill representation embeddings for every topic, through the cache."""
    texts = [t.representation_text() for t in topic_set.topics]
    if not texts:
        return topic_set
    vectors = embed_texts(
        EmbeddingRequest(texts=texts, cache_keys=[f"topic:{t.id}" for t in topic_set.topics]),
        provider, cache=cache,
    )
    for topic, vec in zip(topic_set.topics, vectors):
        topic.representation_embedding = np.asarray(vec, dtype=np.float32)
    return topic_set
