"""Latent Dirichlet Allocation via collapsed Gibbs sampling.

Symmetric priors: alpha = 1/K on document-topic, eta (default 0.01) on
topic-word. The sampler consumes one pre-drawn uniform per token per
sweep, so results are identical whether or not the numba-compiled kernel
is available.
"""

from __future__ import annotations

import logging

import numpy as np

from .corpus import Document, Vocabulary
from .errors import TopicModelError
from .topics import Topic, TopicSet

logger = logging.getLogger(__name__)


def _gibbs_sweep(doc_idx, term_idx, z, n_dk, n_kt, n_k, probs, alpha, eta, eta_v, uniforms):
    n_topics = n_k.shape[0]
    for i in range(doc_idx.shape[0]):
        d = doc_idx[i]
        t = term_idx[i]
        k_old = z[i]
        n_dk[d, k_old] -= 1.0
        n_kt[k_old, t] -= 1.0
        n_k[k_old] -= 1.0
        total = 0.0
        for k in range(n_topics):
            p = (n_kt[k, t] + eta) / (n_k[k] + eta_v) * (n_dk[d, k] + alpha)
            probs[k] = p
            total += p
        u = uniforms[i] * total
        acc = 0.0
        k_new = n_topics - 1
        for k in range(n_topics):
            acc += probs[k]
            if u < acc:
                k_new = k
                break
        z[i] = k_new
        n_dk[d, k_new] += 1.0
        n_kt[k_new, t] += 1.0
        n_k[k_new] += 1.0


try:  # pragma: no cover - exercised implicitly wherever numba is installed
    from numba import njit

    _gibbs_sweep = njit(cache=True)(_gibbs_sweep)
except ImportError:  # pragma: no cover
    logger.info("numba not available; LDA Gibbs sweeps run in pure Python")


class LdaModel:
    """Fitted sampler state: counts, assignments, and the phi matrix."""

    def __init__(self, k: int, alpha: float, eta: float, n_dk: np.ndarray,
                 n_kt: np.ndarray, n_k: np.ndarray, sweeps: int, seed: int):
        self.k = k
        self.alpha = alpha
        self.eta = eta
        self.n_dk = n_dk
        self.n_kt = n_kt
        self.n_k = n_k
        self.sweeps = sweeps
        self.seed = seed

    @property
    def phi(self) -> np.ndarray:
        """Topic-word distributions; every row sums to 1."""
        return (self.n_kt + self.eta) / (self.n_k + self.eta * self.n_kt.shape[1])[:, None]

    def doc_topics(self) -> np.ndarray:
        """Argmax topic per document; ties go to the lowest topic index."""
        return np.argmax(self.n_dk, axis=1)


def fit_lda_model(
    bags: list[list[int]],
    n_terms: int,
    k: int,
    eta: float = 0.01,
    sweeps: int = 200,
    seed: int = 0,
    alpha: float | None = None,
    debug: bool = False,
) -> LdaModel:
    """Run the collapsed Gibbs sampler over term-id bags.

    With debug=True every sweep asserts the count matrices stayed
    non-negative (a corrupted decrement would violate this first).
    """
    if k < 2:
        raise TopicModelError(f"LDA needs at least 2 topics, got k={k}")
    if n_terms < 1:
        raise TopicModelError("LDA needs a non-empty vocabulary")
    if alpha is None:
        alpha = 1.0 / k
    doc_idx = np.asarray(
        [d for d, bag in enumerate(bags) for _ in bag], dtype=np.int64
    )
    term_idx = np.asarray([t for bag in bags for t in bag], dtype=np.int64)
    n_tokens = len(term_idx)
    if n_tokens == 0:
        raise TopicModelError("no in-vocabulary tokens to sample")

    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, size=n_tokens, dtype=np.int64)
    n_dk = np.zeros((len(bags), k), dtype=np.float64)
    n_kt = np.zeros((k, n_terms), dtype=np.float64)
    n_k = np.zeros(k, dtype=np.float64)
    for i in range(n_tokens):
        n_dk[doc_idx[i], z[i]] += 1.0
        n_kt[z[i], term_idx[i]] += 1.0
        n_k[z[i]] += 1.0

    probs = np.empty(k, dtype=np.float64)
    for _ in range(sweeps):
        uniforms = rng.random(n_tokens)
        _gibbs_sweep(doc_idx, term_idx, z, n_dk, n_kt, n_k, probs,
                     float(alpha), float(eta), float(eta * n_terms), uniforms)
        if debug:
            assert n_dk.min() >= 0 and n_kt.min() >= 0 and n_k.min() >= 0, \
                "negative Gibbs count"
    return LdaModel(k=k, alpha=alpha, eta=eta, n_dk=n_dk, n_kt=n_kt, n_k=n_k,
                    sweeps=sweeps, seed=seed)


def fit_lda(
    docs: list[Document],
    vocabulary: Vocabulary,
    k: int,
    eta: float = 0.01,
    sweeps: int = 200,
    seed: int = 0,
    query_id: str = "",
    strategy: str = "",
    top_n_words: int = 10,
) -> TopicSet:
    """Fit LDA over documents and assign each to its argmax topic.

    Documents with no in-vocabulary terms are routed to outliers with a
    warning; topics that end up with no documents are dropped. Surviving
    topics are numbered by descending document count.
    """
    if k < 2:
        raise TopicModelError(f"LDA needs at least 2 topics, got k={k}")
    if len(docs) < k:
        raise TopicModelError(f"LDA with k={k} needs at least {k} documents, got {len(docs)}")
    outliers: list[str] = []
    usable: list[Document] = []
    bags: list[list[int]] = []
    for doc in docs:
        bag = vocabulary.doc_term_ids(doc)
        if bag:
            usable.append(doc)
            bags.append(bag)
        else:
            outliers.append(doc.id)
    if outliers:
        logger.warning(
            "%d/%d documents have no in-vocabulary terms; routed to outliers",
            len(outliers), len(docs),
        )
    if not usable:
        raise TopicModelError("every document is outside the vocabulary")

    model = fit_lda_model(bags, len(vocabulary), k, eta=eta, sweeps=sweeps, seed=seed)
    assignments = model.doc_topics()
    phi = model.phi
    terms = vocabulary.term_list()

    members: dict[int, list[str]] = {}
    for doc, topic in zip(usable, assignments):
        members.setdefault(int(topic), []).append(doc.id)
    surviving = sorted(members.items(), key=lambda item: (-len(item[1]), item[0]))
    topics = []
    for new_id, (topic_idx, doc_ids) in enumerate(surviving):
        ranked = sorted(range(len(terms)), key=lambda t: (-phi[topic_idx, t], terms[t]))
        topics.append(
            Topic(id=new_id, doc_ids=doc_ids,
                  top_words=[terms[t] for t in ranked[:top_n_words]])
        )
    return TopicSet(query_id=query_id, strategy=strategy, model="lda",
                    topics=topics, outlier_doc_ids=outliers)
