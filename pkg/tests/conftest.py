import numpy as np
import pytest

from queryscope.corpus import Corpus, Document
from queryscope.embeddings import EmbeddingStore, HashedTextEmbedder

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_corpus() -> Corpus:
    return Corpus([
        Document("a", "apple banana cherry"),
        Document("b", "dog egg fig"),
        Document("c", "grape hat ice"),
    ])


@pytest.fixture
def hashed_provider() -> HashedTextEmbedder:
    return HashedTextEmbedder(dim=32, seed=11)


def make_store(vectors: dict[str, list[float]]) -> EmbeddingStore:
    dim = len(next(iter(vectors.values())))
    store = EmbeddingStore(dim=dim)
    for key, vec in vectors.items():
        store.add(key, np.asarray(vec, dtype=np.float32))
    return store


def random_unit_vectors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    matrix = rng.standard_normal((n, dim))
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)
