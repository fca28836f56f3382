"""Embedding stores, vector file IO, similarity, and embedding providers.

Vector files are raw little-endian float32, row-major, with a sidecar id
file (one id per line, same order). Similarity math runs in float64 even
though storage is float32, so metric aggregation is stable.
"""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmbeddingError

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingStore:
    """Immutable id -> fixed-dimension vector map."""

    dim: int
    _vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise EmbeddingError(f"embedding dim must be positive, got {self.dim}")

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def ids(self) -> list[str]:
        return list(self._vectors.keys())

    def get(self, key: str) -> np.ndarray:
        try:
            return self._vectors[key]
        except KeyError:
            raise EmbeddingError(f"no embedding stored for id {key!r}") from None

    def add(self, key: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise EmbeddingError(
                f"vector for {key!r} has dim {vec.shape}, store dim is {self.dim}"
            )
        if key in self._vectors:
            raise EmbeddingError(f"duplicate embedding id {key!r}")
        self._vectors[key] = vec

    def matrix(self, keys: list[str]) -> np.ndarray:
        """Stacked float32 matrix of the given ids, in order."""
        return np.stack([self.get(k) for k in keys])


def load_precomputed_embeddings(vector_path: str | Path, id_path: str | Path) -> EmbeddingStore:
    """Load a store from a raw float32 vector file plus an id sidecar.

    The vector file length must be exactly ``len(ids) * dim * 4`` bytes;
    dim is inferred from the file size and the id count.
    """
    vector_path, id_path = Path(vector_path), Path(id_path)
    if not vector_path.is_file():
        raise EmbeddingError(f"vector file not found: {vector_path}")
    if not id_path.is_file():
        raise EmbeddingError(f"id file not found: {id_path}")
    ids = [line.strip() for line in id_path.read_text("utf-8").splitlines() if line.strip()]
    if not ids:
        raise EmbeddingError(f"id file {id_path} is empty")
    n_bytes = vector_path.stat().st_size
    if n_bytes % (4 * len(ids)) != 0:
        raise EmbeddingError(
            f"vector file {vector_path} has {n_bytes} bytes, not a multiple of "
            f"4*{len(ids)} ids; file and sidecar do not match"
        )
    dim = n_bytes // (4 * len(ids))
    if dim <= 0:
        raise EmbeddingError(f"inferred dim {dim} from {vector_path} is not positive")
    data = np.fromfile(vector_path, dtype="<f4").reshape(len(ids), dim)
    store = EmbeddingStore(dim=int(dim))
    for key, row in zip(ids, data):
        store.add(key, row)
    return store


def save_embeddings(store: EmbeddingStore, vector_path: str | Path, id_path: str | Path) -> None:
    ids = store.ids()
    matrix = store.matrix(ids).astype("<f4")
    Path(vector_path).write_bytes(matrix.tobytes(order="C"))
    Path(id_path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between u and v, computed in float64."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise EmbeddingError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise EmbeddingError("cosine similarity undefined for zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class EmbeddingRequest:
    """Texts to embed plus parallel stable ids for store insertion."""

    texts: list[str]
    cache_keys: list[str]

    def __post_init__(self) -> None:
        if len(self.texts) != len(self.cache_keys):
            raise EmbeddingError(
                f"{len(self.texts)} texts but {len(self.cache_keys)} cache keys"
            )


class EmbeddingCache:
    """On-disk vector cache keyed by (provider name, sha256 of text).

    One raw float32 vector per entry file; writes go through a temp file
    and rename so concurrent readers never observe partial entries.
    """

    def __init__(self, root: str | Path, provider_name: str, dim: int):
        self.root = Path(root) / provider_name
        self.dim = dim
        self.root.mkdir(parents=True, exist_ok=True)

    def _entry_path(self, text: str) -> Path:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return self.root / f"{digest}.vec"

    def get(self, text: str) -> np.ndarray | None:
        path = self._entry_path(text)
        if not path.is_file():
            return None
        vec = np.fromfile(path, dtype="<f4")
        if vec.shape != (self.dim,):
            raise EmbeddingError(
                f"cache entry {path} has dim {vec.shape[0]}, expected {self.dim}"
            )
        return vec

    def put(self, text: str, vector: np.ndarray) -> None:
        path = self._entry_path(text)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(np.asarray(vector, dtype="<f4").tobytes())
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)


class HashedTextEmbedder:
    """Deterministic local provider: bag of per-token random directions.

    Each token maps to a fixed unit vector drawn from a seeded generator;
    a text embeds as the normalized sum over its token multiset, so texts
    sharing tokens land near each other. Used by the bundled synthetic
    dataset and as an offline stand-in for a neural encoder.
    """

    name = "hashed"

    def __init__(self, dim: int = 128, seed: int = 7):
        self.dim = dim
        self.seed = seed
        self.calls = 0
        self._token_vectors: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_vectors.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}|{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            raw = rng.standard_normal(self.dim)
            vec = (raw / np.linalg.norm(raw)).astype(np.float64)
            self._token_vectors[token] = vec
        return vec

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        self.calls += 1
        out = []
        for text in texts:
            tokens = [t for t in _simple_tokens(text)]
            if not tokens:
                raise EmbeddingError(f"cannot embed text with no tokens: {text!r}")
            acc = np.zeros(self.dim, dtype=np.float64)
            for tok in tokens:
                acc += self._token_vector(tok)
            norm = np.linalg.norm(acc)
            if norm == 0.0:
                raise EmbeddingError(f"degenerate zero embedding for {text!r}")
            out.append((acc / norm).astype(np.float32))
        return out


def _simple_tokens(text: str) -> list[str]:
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


class HttpEmbeddingProvider:
    """Remote endpoint client: POST {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, url: str, dim: int, retries: int = 2, backoff: float = 0.5,
                 timeout: float = 30.0, name: str = "endpoint"):
        self.url = url
        self.dim = dim
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.name = name
        self.calls = 0

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            self.calls += 1
            try:
                resp = requests.post(self.url, json={"texts": texts}, timeout=self.timeout)
                if resp.status_code != 200:
                    raise EmbeddingError(
                        f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}"
                    )
                vectors = resp.json().get("vectors")
                if not isinstance(vectors, list) or len(vectors) != len(texts):
                    raise EmbeddingError(
                        f"endpoint returned {len(vectors) if isinstance(vectors, list) else 'no'} "
                        f"vectors for {len(texts)} texts"
                    )
                return [np.asarray(v, dtype=np.float32) for v in vectors]
            except Exception as exc:  # noqa: BLE001 - network and schema errors retried alike
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        raise EmbeddingError(f"embedding endpoint failed after {self.retries + 1} attempts: {last_error}")


def embed_texts(
    request: EmbeddingRequest,
    provider,
    cache: EmbeddingCache | None = None,
    store: EmbeddingStore | None = None,
) -> list[np.ndarray]:
    """Embed texts through the cache, optionally writing into a store.

    Cached texts never reach the provider; fresh results are written back
    to the cache. Every returned vector must match the provider dim (and
    the store dim when a store is given).
    """
    dim = provider.dim if store is None else store.dim
    results: list[np.ndarray | None] = [None] * len(request.texts)
    missing_idx: list[int] = []
    for i, text in enumerate(request.texts):
        cached = cache.get(text) if cache is not None else None
        if cached is not None:
            results[i] = cached
        else:
            missing_idx.append(i)

    if missing_idx:
        fresh = provider.embed([request.texts[i] for i in missing_idx])
        for i, vec in zip(missing_idx, fresh):
            if vec.shape != (dim,):
                raise EmbeddingError(
                    f"provider returned dim {vec.shape[0]} for {request.cache_keys[i]!r}, "
                    f"expected {dim}"
                )
            results[i] = vec
            if cache is not None:
                cache.put(request.texts[i], vec)

    vectors = [np.asarray(v, dtype=np.float32) for v in results]
    if store is not None:
        for key, vec in zip(request.cache_keys, vectors):
            if key not in store:
                store.add(key, vec)
    return vectors
