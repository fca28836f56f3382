"""End-to-end orchestration: select, model, evaluate, report.

A run is a directory of artifacts. Every (query, strategy) task writes a
selection file; every (query, strategy, model) task writes a topic-set
file; the evaluate stage writes metric records, coverage matrices, and
IR validation tables; the report stage writes aggregate tables and a
plain-text summary. The manifest is written last, atomically, with a
content hash of every artifact: two runs over identical inputs must
reproduce identical hashes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus, build_vocabulary, load_corpus
from .embeddings import (
    EmbeddingCache,
    EmbeddingStore,
    HashedTextEmbedder,
    HttpEmbeddingProvider,
    load_precomputed_embeddings,
)
from .errors import ConfigError, QueryscopeError
from .evaluation import (
    Qrels,
    compute_metric_record,
    coverage_matrix,
    ir_metrics,
    load_qrels,
    mean_and_sample_std,
    mean_skipping_none,
)
from .lda import fit_lda
from .lexical import build_bm25_index, load_bm25_index, save_bm25_index
from .ranking import RankedList
from .strategies import (
    RANKED_STRATEGIES,
    STRATEGY_NAMES,
    RetrievalResources,
    Selection,
    StrategyConfig,
    derive_seed,
    run_strategy,
)
from .topics import (
    TopicSet,
    embed_topic_representations,
    fit_cluster_topic_model,
    import_topic_set,
    match_topic_counts,
)

logger = logging.getLogger(__name__)

_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]+")

BUILTIN_MODELS = ("cluster", "lda")


def _safe(name: str) -> str:
    return _SAFE_NAME.sub("_", name)


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _atomic_write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(value) -> str:
    """Deterministic CSV cell: repr for floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@dataclass
class RunConfig:
    """Validated run settings; all paths are absolute after loading."""

    corpus: Path
    queries: Path
    out_dir: Path
    strategies: list[dict]
    models: list[str]
    strategy_config: dict = field(default_factory=dict)
    qrels: Path | None = None
    doc_vectors: Path | None = None
    doc_ids: Path | None = None
    query_vectors: Path | None = None
    query_ids: Path | None = None
    provider: dict = field(default_factory=dict)
    cache_dir: Path | None = None
    lda_params: dict = field(default_factory=dict)
    cluster_params: dict = field(default_factory=dict)
    rel_threshold: float = 0.5
    match_threshold: float = 0.7
    ir_k: int = 20
    ir_n: int = 1000
    base_seed: int = 42
    jobs: int = 1
    bm25_k1: float = 1.5
    bm25_b: float = 0.75
    version: int = 1

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        base = path.parent

        def resolve(key: str, obj=raw) -> Path | None:
            value = obj.get(key)
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() else (base / p).resolve()

        emb = raw.get("embeddings", {})
        strategies = []
        for entry in raw.get("strategies", []):
            if isinstance(entry, str):
                strategies.append({"name": entry})
            elif isinstance(entry, dict) and "name" in entry:
                strategies.append(dict(entry))
            else:
                raise ConfigError(f"bad strategy entry {entry!r}: use a name or an object")
        thresholds = raw.get("thresholds", {})
        ir = raw.get("ir", {})
        config = cls(
            corpus=resolve("corpus") or Path(""),
            queries=resolve("queries") or Path(""),
            out_dir=resolve("out") or (base / "run"),
            strategies=strategies,
            models=list(raw.get("models", [])),
            strategy_config=dict(raw.get("strategy_config", {})),
            qrels=resolve("qrels"),
            doc_vectors=resolve("doc_vectors", emb),
            doc_ids=resolve("doc_ids", emb),
            query_vectors=resolve("query_vectors", emb),
            query_ids=resolve("query_ids", emb),
            provider=dict(emb.get("provider", {})),
            cache_dir=resolve("cache_dir", emb),
            lda_params=dict(raw.get("lda", {})),
            cluster_params=dict(raw.get("cluster", {})),
            rel_threshold=float(thresholds.get("relevant", 0.5)),
            match_threshold=float(thresholds.get("match", 0.7)),
            ir_k=int(ir.get("k", 20)),
            ir_n=int(ir.get("n", 1000)),
            base_seed=int(raw.get("base_seed", 42)),
            jobs=int(raw.get("jobs", 1)),
            bm25_k1=float(raw.get("bm25", {}).get("k1", 1.5)),
            bm25_b=float(raw.get("bm25", {}).get("b", 0.75)),
            version=int(raw.get("version", 1)),
        )
        config.validate()
        return config

    def validate(self) -> None:
        if not self.corpus.is_file():
            raise ConfigError(f"corpus file not found: {self.corpus}")
        if not self.queries.is_file():
            raise ConfigError(f"queries file not found: {self.queries}")
        if self.qrels is not None and not self.qrels.is_file():
            raise ConfigError(f"qrels file not found: {self.qrels}")
        for label in ("doc_vectors", "doc_ids", "query_vectors", "query_ids"):
            value = getattr(self, label)
            if value is not None and not value.is_file():
                raise ConfigError(f"{label} file not found: {value}")
        if not self.strategies:
            raise ConfigError("config lists no strategies")
        for entry in self.strategies:
            if entry["name"] not in STRATEGY_NAMES:
                raise ConfigError(
                    f"unknown strategy {entry['name']!r}; expected one of {STRATEGY_NAMES}"
                )
        if not self.models:
            raise ConfigError("config lists no models")
        for model in self.models:
            if model not in BUILTIN_MODELS and not model.startswith("import:"):
                raise ConfigError(
                    f"unknown model {model!r}; expected 'lda', 'cluster', or 'import:<pattern>'"
                )
        for name, value in (("relevant", self.rel_threshold), ("match", self.match_threshold)):
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} threshold must be in (0, 1], got {value}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    def strategy_configs(self) -> list[StrategyConfig]:
        out = []
        for entry in self.strategies:
            merged = {**self.strategy_config, **entry, "base_seed": self.base_seed}
            out.append(StrategyConfig(**merged))
        return out

    def snapshot(self) -> dict:
        snap = {
            "version": self.version,
            "corpus": str(self.corpus),
            "queries": str(self.queries),
            "qrels": str(self.qrels) if self.qrels else None,
            "out": str(self.out_dir),
            "strategies": self.strategies,
            "strategy_config": self.strategy_config,
            "models": self.models,
            "lda": self.lda_params,
            "cluster": self.cluster_params,
            "thresholds": {"relevant": self.rel_threshold, "match": self.match_threshold},
            "ir": {"k": self.ir_k, "n": self.ir_n},
            "base_seed": self.base_seed,
            "bm25": {"k1": self.bm25_k1, "b": self.bm25_b},
            "embeddings": {
                "doc_vectors": str(self.doc_vectors) if self.doc_vectors else None,
                "doc_ids": str(self.doc_ids) if self.doc_ids else None,
                "query_vectors": str(self.query_vectors) if self.query_vectors else None,
                "query_ids": str(self.query_ids) if self.query_ids else None,
                "provider": self.provider,
            },
        }
        return snap


def _build_provider(config: RunConfig):
    ptype = config.provider.get("type")
    if ptype is None:
        return None
    if ptype == "hashed":
        return HashedTextEmbedder(
            dim=int(config.provider.get("dim", 128)),
            seed=int(config.provider.get("seed", 7)),
        )
    if ptype == "endpoint":
        if "url" not in config.provider or "dim" not in config.provider:
            raise ConfigError("endpoint provider needs 'url' and 'dim'")
        return HttpEmbeddingProvider(
            url=config.provider["url"],
            dim=int(config.provider["dim"]),
            retries=int(config.provider.get("retries", 2)),
            backoff=float(config.provider.get("backoff", 0.5)),
            timeout=float(config.provider.get("timeout", 30.0)),
        )
    raise ConfigError(f"unknown embedding provider type {config.provider.get('type')!r}")


@dataclass
class Runtime:
    """Loaded inputs shared by every task in a run.

    Everything is immutable after construction except the query store,
    which may grow when a provider embeds a query missing from the
    precomputed file; that path is serialized by a lock.
    """

    corpus: Corpus
    queries: list[tuple[str, str]]
    resources: RetrievalResources
    query_store: EmbeddingStore | None
    qrels: Qrels | None
    cache: EmbeddingCache | None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def query_vector(self, query_id: str, query_text: str) -> np.ndarray | None:
        with self._lock:
            if self.query_store is not None and query_id in self.query_store:
                return self.query_store.get(query_id)
            provider = self.resources.provider
            if provider is None:
                return None
            vec = provider.embed([query_text])[0]
            if self.query_store is not None:
                self.query_store.add(query_id, vec)
            return vec


def load_queries(path: str | Path) -> list[tuple[str, str]]:
    """Read a queries file: one JSON object {"id", "text"} per line."""
    path = Path(path)
    queries: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{lineno}: malformed query record: {exc}") from None
        qid, text = record.get("id"), record.get("text")
        if not isinstance(qid, str) or not qid or not isinstance(text, str) or not text.strip():
            raise ConfigError(f"{path}:{lineno}: query needs non-empty 'id' and 'text'")
        if qid in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        queries.append((qid, text))
    if not queries:
        raise ConfigError(f"no queries in {path}")
    return queries


def build_runtime(config: RunConfig, bm25_path: Path | None = None) -> Runtime:
    corpus = load_corpus(config.corpus)
    queries = load_queries(config.queries)
    if bm25_path is None:
        bm25_path = config.out_dir / "indices" / "bm25.idx"
    bm25 = None
    if bm25_path.is_file():
        candidate = load_bm25_index(bm25_path)
        # a persisted index is only reusable if it matches the config
        if (candidate.k1 == config.bm25_k1 and candidate.b == config.bm25_b
                and candidate.doc_ids == corpus.ids()):
            bm25 = candidate
        else:
            logger.warning("persisted index %s does not match config; rebuilding", bm25_path)
    if bm25 is None:
        bm25 = build_bm25_index(corpus, k1=config.bm25_k1, b=config.bm25_b)
    doc_store = None
    if config.doc_vectors and config.doc_ids:
        doc_store = load_precomputed_embeddings(config.doc_vectors, config.doc_ids)
    query_store = None
    if config.query_vectors and config.query_ids:
        query_store = load_precomputed_embeddings(config.query_vectors, config.query_ids)
    provider = _build_provider(config)
    cache = None
    if provider is not None:
        cache_root = config.cache_dir or (config.out_dir / ".cache")
        cache = EmbeddingCache(cache_root, provider.name, provider.dim)
    qrels = load_qrels(config.qrels) if config.qrels else None
    resources = RetrievalResources(
        corpus=corpus, bm25=bm25, store=doc_store, provider=provider, cache=cache
    )
    return Runtime(corpus=corpus, queries=queries, resources=resources,
                   query_store=query_store, qrels=qrels, cache=cache)


@dataclass
class TaskResult:
    name: str
    status: str  # "ok" | "failed"
    seconds: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status,
                "seconds": round(self.seconds, 3), "error": self.error}


def _run_tasks(tasks: list[tuple[str, callable]], jobs: int) -> list[TaskResult]:
    """Run isolated tasks, optionally in a thread pool; order-stable output."""

    def execute(item: tuple[str, callable]) -> TaskResult:
        name, fn = item
        start = time.perf_counter()
        try:
            fn()
            return TaskResult(name=name, status="ok", seconds=time.perf_counter() - start)
        except Exception as exc:  # noqa: BLE001 - task isolation is the contract
            logger.warning("task %s failed: %s", name, exc)
            return TaskResult(name=name, status="failed",
                              seconds=time.perf_counter() - start, error=str(exc))

    if jobs <= 1:
        return [execute(item) for item in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(execute, tasks))


def selection_path(out_dir: Path, query_id: str, strategy: str) -> Path:
    return out_dir / "selections" / f"{_safe(query_id)}__{_safe(strategy)}.json"


def topics_path(out_dir: Path, query_id: str, strategy: str, model: str) -> Path:
    return out_dir / "topics" / f"{_safe(query_id)}__{_safe(strategy)}__{_safe(model)}.json"


def stage_index(config: RunConfig, runtime: Runtime) -> Path:
    """Persist the BM25 index for later stages."""
    path = config.out_dir / "indices" / "bm25.idx"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_bm25_index(runtime.resources.bm25, path)
    return path


_STORE_FREE_STRATEGIES = frozenset({"random_uniform", "keyword"})


def _check_store_covers_corpus(runtime: Runtime) -> None:
    store = runtime.resources.store
    if store is None:
        raise QueryscopeError("dense strategies need document embeddings")
    for doc_id in runtime.corpus.ids():
        if doc_id not in store:
            raise QueryscopeError(f"no embedding for corpus document {doc_id!r}")


def stage_select(config: RunConfig, runtime: Runtime) -> list[TaskResult]:
    tasks = []
    for strat_cfg in config.strategy_configs():
        for query_id, query_text in runtime.queries:
            def task(cfg=strat_cfg, qid=query_id, text=query_text):
                if cfg.name not in _STORE_FREE_STRATEGIES:
                    _check_store_covers_corpus(runtime)
                vec = runtime.query_vector(qid, text)
                selection = run_strategy(cfg, qid, text, runtime.resources, query_vector=vec)
                path = selection_path(config.out_dir, qid, cfg.name)
                path.parent.mkdir(parents=True, exist_ok=True)
                _atomic_write_json(path, selection.to_dict())

            tasks.append((f"select/{query_id}/{strat_cfg.name}", task))
    return _run_tasks(tasks, config.jobs)


def _model_sequence(models: list[str]) -> list[str]:
    """Canonical execution order: cluster before lda (topic-count matching)."""
    ordered = [m for m in ("cluster", "lda") if m in models]
    ordered.extend(m for m in models if m.startswith("import:"))
    return ordered


def _fit_models_for_selection(
    config: RunConfig, runtime: Runtime, query_id: str, strategy: str
) -> None:
    sel_path = selection_path(config.out_dir, query_id, strategy)
    if not sel_path.is_file():
        raise QueryscopeError(f"missing selection artifact {sel_path}")
    selection = Selection.load(sel_path)
    docs = [runtime.corpus.get(d) for d in selection.doc_ids]
    vocabulary = build_vocabulary(runtime.corpus.subset(selection.doc_ids))

    cluster_result: TopicSet | None = None
    for model in _model_sequence(config.models):
        if model == "cluster":
            params = config.cluster_params
            topic_set = fit_cluster_topic_model(
                docs,
                runtime.resources.require_store("cluster model"),
                vocabulary,
                min_cluster_size=int(params.get("min_cluster_size", 5)),
                k_min=int(params.get("k_min", 2)),
                k_max=int(params.get("k_max", 30)),
                seed=derive_seed(config.base_seed, query_id, strategy, "cluster"),
                query_id=query_id,
                strategy=strategy,
            )
            topic_set.validate_partition(selection.doc_ids)
            cluster_result = topic_set
            _atomic_write_json(topics_path(config.out_dir, query_id, strategy, "cluster"),
                               topic_set.to_dict())
        elif model == "lda":
            params = config.lda_params
            k = match_topic_counts(cluster_result, fallback_k=int(params.get("fallback_k", 20)))
            if k > len(docs):
                logger.warning(
                    "query %s strategy %s: clamping lda topic count %d to %d documents",
                    query_id, strategy, k, len(docs),
                )
                k = max(2, len(docs))
            topic_set = fit_lda(
                docs,
                vocabulary,
                k,
                eta=float(params.get("eta", 0.01)),
                sweeps=int(params.get("sweeps", 200)),
                seed=derive_seed(config.base_seed, query_id, strategy, "lda"),
                query_id=query_id,
                strategy=strategy,
            )
            topic_set.validate_partition(selection.doc_ids)
            _atomic_write_json(topics_path(config.out_dir, query_id, strategy, "lda"),
                               topic_set.to_dict())
        else:
            pattern = model[len("import:"):]
            source = Path(pattern.format(query_id=query_id, strategy=strategy))
            topic_set = import_topic_set(source, selection_ids=selection.doc_ids)
            _atomic_write_json(
                topics_path(config.out_dir, query_id, strategy, topic_set.model),
                topic_set.to_dict(),
            )


def stage_topics(config: RunConfig, runtime: Runtime) -> list[TaskResult]:
    tasks = []
    for strat_cfg in config.strategy_configs():
        for query_id, _ in runtime.queries:
            def task(qid=query_id, strategy=strat_cfg.name):
                _fit_models_for_selection(config, runtime, qid, strategy)

            tasks.append((f"topics/{query_id}/{strat_cfg.name}", task))
    return _run_tasks(tasks, config.jobs)


def _model_names(config: RunConfig, out_dir: Path) -> list[str]:
    """Concrete model names present in artifacts (imports use their own)."""
    names = [m for m in BUILTIN_MODELS if m in config.models]
    for path in sorted((out_dir / "topics").glob("*.json")):
        model = path.stem.split("__")[-1]
        if model not in names:
            names.append(model)
    return names


def stage_evaluate(config: RunConfig, runtime: Runtime) -> list[TaskResult]:
    """Metric records, coverage matrices, and IR validation tables."""
    out_dir = config.out_dir
    results: list[TaskResult] = []
    start = time.perf_counter()
    strategy_names = [c.name for c in config.strategy_configs()]
    model_names = _model_names(config, out_dir)
    provider = runtime.resources.provider

    records = []
    sets_by_model: dict[str, dict[tuple[str, str], TopicSet]] = {m: {} for m in model_names}
    query_vectors: dict[str, np.ndarray] = {}
    try:
        for query_id, query_text in runtime.queries:
            vec = runtime.query_vector(query_id, query_text)
            if vec is None:
                raise QueryscopeError(f"no embedding available for query {query_id!r}")
            query_vectors[query_id] = np.asarray(vec, dtype=np.float64)

        for model in model_names:
            for strategy in strategy_names:
                for query_id, _ in runtime.queries:
                    path = topics_path(out_dir, query_id, strategy, model)
                    if not path.is_file():
                        continue
                    topic_set = import_topic_set(path)
                    if topic_set.topics:
                        if provider is None:
                            raise QueryscopeError(
                                "an embedding provider is required to embed topic representations"
                            )
                        embed_topic_representations(topic_set, provider, cache=runtime.cache)
                        records.append(
                            compute_metric_record(
                                query_vectors[query_id], topic_set, config.rel_threshold
                            )
                        )
                    sets_by_model[model][(query_id, strategy)] = topic_set

        records.sort(key=lambda r: (r.model, r.strategy, r.query_id))
        _atomic_write_json(out_dir / "metrics" / "records.json",
                           [r.to_dict() for r in records])
        _write_csv(
            out_dir / "metrics" / "records.csv",
            ["query_id", "strategy", "model", "relevancy", "overall_diversity",
             "relevant_diversity", "n_topics", "n_relevant_topics"],
            [[r.query_id, r.strategy, r.model, r.relevancy, r.overall_diversity,
              r.relevant_diversity, r.n_topics, r.n_relevant_topics] for r in records],
        )
        results.append(TaskResult("evaluate/records", "ok", time.perf_counter() - start))
    except Exception as exc:  # noqa: BLE001
        logger.warning("metric records failed: %s", exc)
        results.append(TaskResult("evaluate/records", "failed",
                                  time.perf_counter() - start, error=str(exc)))
        return results

    for model in model_names:
        start = time.perf_counter()
        try:
            matrix = coverage_matrix(
                strategy_names, sets_by_model[model], query_vectors,
                match_threshold=config.match_threshold, rel_threshold=config.rel_threshold,
            )
            _atomic_write_json(out_dir / "metrics" / f"coverage_{_safe(model)}.json",
                               matrix.to_dict())
            results.append(TaskResult(f"evaluate/coverage/{model}", "ok",
                                      time.perf_counter() - start))
        except Exception as exc:  # noqa: BLE001
            logger.warning("coverage matrix for %s failed: %s", model, exc)
            results.append(TaskResult(f"evaluate/coverage/{model}", "failed",
                                      time.perf_counter() - start, error=str(exc)))

    if runtime.qrels is not None:
        start = time.perf_counter()
        try:
            rows = []
            for strategy in strategy_names:
                if strategy not in RANKED_STRATEGIES:
                    continue
                for query_id, _ in runtime.queries:
                    path = selection_path(out_dir, query_id, strategy)
                    if not path.is_file():
                        continue
                    selection = Selection.load(path)
                    ranked = RankedList(
                        [(d, float(-i)) for i, d in enumerate(selection.doc_ids)],
                        query_id=query_id, source=strategy,
                    )
                    precision, recall = ir_metrics(
                        ranked, runtime.qrels, k=config.ir_k, n=config.ir_n
                    )
                    rows.append([strategy, query_id, precision, recall])
            _write_csv(
                out_dir / "metrics" / "ir.csv",
                ["strategy", "query_id", f"precision_at_{config.ir_k}",
                 f"recall_at_{config.ir_n}"],
                rows,
            )
            _atomic_write_json(
                out_dir / "metrics" / "ir.json",
                [
                    {"strategy": s, "query_id": q,
                     f"precision_at_{config.ir_k}": p, f"recall_at_{config.ir_n}": r}
                    for s, q, p, r in rows
                ],
            )
            results.append(TaskResult("evaluate/ir", "ok", time.perf_counter() - start))
        except Exception as exc:  # noqa: BLE001
            logger.warning("IR metrics failed: %s", exc)
            results.append(TaskResult("evaluate/ir", "failed",
                                      time.perf_counter() - start, error=str(exc)))
    return results


def emit_report(run_dir: str | Path, plots: bool = False) -> list[TaskResult]:
    """Aggregate tables and a plain-text summary from a (partial) run dir."""
    run_dir = Path(run_dir)
    report_dir = run_dir / "report"
    results: list[TaskResult] = []
    start = time.perf_counter()
    try:
        records_path = run_dir / "metrics" / "records.json"
        if not records_path.is_file():
            raise QueryscopeError(f"missing metrics artifact {records_path}")
        records = json.loads(records_path.read_text("utf-8"))

        grouped: dict[tuple[str, str], list[dict]] = {}
        for rec in records:
            grouped.setdefault((rec["model"], rec["strategy"]), []).append(rec)

        relevance_rows, overall_rows, relevant_rows, scatter_rows = [], [], [], []
        for (model, strategy), recs in sorted(grouped.items()):
            values = [r["relevancy"] for r in recs]
            mean, std = mean_and_sample_std(values)
            relevance_rows.append([model, strategy, mean, std, len(values)])
            o_mean, o_skip = mean_skipping_none([r["overall_diversity"] for r in recs])
            overall_rows.append([model, strategy, o_mean, len(recs) - o_skip, o_skip])
            r_mean, r_skip = mean_skipping_none([r["relevant_diversity"] for r in recs])
            relevant_rows.append([model, strategy, r_mean, len(recs) - r_skip, r_skip])
            scatter_rows.append([model, strategy, mean, o_mean])

        _write_csv(report_dir / "relevance.csv",
                   ["model", "strategy", "mean_relevancy", "sample_std", "n_queries"],
                   relevance_rows)
        _write_csv(report_dir / "diversity_overall.csv",
                   ["model", "strategy", "mean_overall_diversity", "n_queries", "n_skipped"],
                   overall_rows)
        _write_csv(report_dir / "diversity_relevant.csv",
                   ["model", "strategy", "mean_relevant_diversity", "n_queries", "n_skipped"],
                   relevant_rows)
        _write_csv(report_dir / "relevance_vs_diversity.csv",
                   ["model", "strategy", "mean_relevancy", "mean_overall_diversity"],
                   scatter_rows)

        lines = ["strategy rankings per metric", "=" * 29, ""]
        models = sorted({m for m, _ in grouped})
        for model in models:
            lines.append(f"[{model}] by mean relevancy (descending):")
            rows = [r for r in relevance_rows if r[0] == model]
            rows.sort(key=lambda r: -r[2])
            for _, strategy, mean, std, n in rows:
                std_text = f" +/- {std:.3f}" if std is not None else ""
                lines.append(f"  {strategy:<20} {mean:.3f}{std_text}  (n={n})")
            lines.append("")
        ir_path = run_dir / "metrics" / "ir.csv"
        if ir_path.is_file():
            with ir_path.open("r", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                by_strategy: dict[str, list[list[str]]] = {}
                for row in reader:
                    by_strategy.setdefault(row[0], []).append(row)
            ir_rows = []
            for strategy, rows in sorted(by_strategy.items()):
                precisions = [float(r[2]) for r in rows if r[2]]
                recalls = [float(r[3]) for r in rows if r[3]]
                ir_rows.append([
                    strategy,
                    float(np.mean(precisions)) if precisions else None,
                    float(np.mean(recalls)) if recalls else None,
                    len(rows),
                ])
            _write_csv(report_dir / "ir_summary.csv",
                       ["strategy", header[2].replace("precision", "mean_precision"),
                        header[3].replace("recall", "mean_recall"), "n_queries"],
                       ir_rows)
            lines.append("IR validation (means across queries):")
            for strategy, precision, recall, n in ir_rows:
                p_text = f"{precision:.3f}" if precision is not None else "n/a"
                r_text = f"{recall:.3f}" if recall is not None else "n/a"
                lines.append(f"  {strategy:<20} P={p_text}  R={r_text}  (n={n})")
            lines.append("")
        coverage_files = sorted((run_dir / "metrics").glob("coverage_*.json"))
        for path in coverage_files:
            matrix = json.loads(path.read_text("utf-8"))
            model = path.stem[len("coverage_"):]
            lines.append(f"[{model}] coverage matrix (row covers column), "
                         f"threshold {matrix['threshold']}:")
            names = matrix["strategies"]
            lines.append("  " + " ".join(f"{n[:10]:>10}" for n in [""] + names))
            for name, row in zip(names, matrix["values"]):
                cells = " ".join(
                    f"{v:>10.3f}" if v is not None else f"{'n/a':>10}" for v in row
                )
                lines.append(f"  {name[:10]:>10} {cells}")
            lines.append("")
        _atomic_write_text(report_dir / "summary.txt", "\n".join(lines) + "\n")
        results.append(TaskResult("report/tables", "ok", time.perf_counter() - start))
    except Exception as exc:  # noqa: BLE001
        logger.warning("report generation failed: %s", exc)
        results.append(TaskResult("report/tables", "failed",
                                  time.perf_counter() - start, error=str(exc)))
        return results

    if plots:
        start = time.perf_counter()
        try:
            _render_plots(run_dir, report_dir)
            results.append(TaskResult("report/plots", "ok", time.perf_counter() - start))
        except Exception as exc:  # noqa: BLE001
            logger.warning("plot rendering failed: %s", exc)
            results.append(TaskResult("report/plots", "failed",
                                      time.perf_counter() - start, error=str(exc)))
    return results


def _render_plots(run_dir: Path, report_dir: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    scatter_path = report_dir / "relevance_vs_diversity.csv"
    if scatter_path.is_file():
        with scatter_path.open("r", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [row for row in reader]
        models = sorted({row[0] for row in rows})
        for model in models:
            pts = [(row[1], float(row[2]), float(row[3]))
                   for row in rows if row[0] == model and row[2] and row[3]]
            if not pts:
                continue
            fig, ax = plt.subplots(figsize=(6, 4.5))
            for strategy, x, y in pts:
                ax.scatter(x, y, label=strategy)
            ax.set_xlabel("mean relevancy")
            ax.set_ylabel("mean overall diversity")
            ax.set_title(f"relevance vs diversity ({model})")
            ax.legend(fontsize=7)
            fig.tight_layout()
            fig.savefig(report_dir / f"scatter_{_safe(model)}.png", dpi=120)
            plt.close(fig)

    for path in sorted((run_dir / "metrics").glob("coverage_*.json")):
        matrix = json.loads(path.read_text("utf-8"))
        names = matrix["strategies"]
        values = np.array(
            [[v if v is not None else np.nan for v in row] for row in matrix["values"]],
            dtype=float,
        )
        fig, ax = plt.subplots(figsize=(5.5, 5))
        image = ax.imshow(values, vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=7)
        ax.set_yticks(range(len(names)), names, fontsize=7)
        ax.set_title(path.stem)
        fig.colorbar(image, ax=ax)
        fig.tight_layout()
        fig.savefig(report_dir / f"{path.stem}.png", dpi=120)
        plt.close(fig)


@dataclass
class RunManifest:
    config: dict
    tool_version: str
    tasks: list[TaskResult]
    artifacts: dict[str, str]
    stage_seconds: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "tool_version": self.tool_version,
            "tasks": [t.to_dict() for t in self.tasks],
            "artifacts": self.artifacts,
            "stage_seconds": {k: round(v, 3) for k, v in self.stage_seconds.items()},
        }

    def failed_tasks(self) -> list[TaskResult]:
        return [t for t in self.tasks if t.status != "ok"]


def hash_artifacts(out_dir: Path) -> dict[str, str]:
    """sha256 of every artifact file, keyed by run-relative path."""
    hashes: dict[str, str] = {}
    for path in sorted(out_dir.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(out_dir)
        if rel.name == "manifest.json" or any(p.startswith(".") for p in rel.parts):
            continue
        hashes[str(rel)] = hashlib.sha256(path.read_bytes()).hexdigest()
    return hashes


def run_pipeline(config: RunConfig, plots: bool = False) -> RunManifest:
    """Run all stages and write the manifest last.

    Individual task failures are recorded and do not stop other tasks;
    inspect RunManifest.failed_tasks() (the CLI exits nonzero on any).
    """
    config.out_dir.mkdir(parents=True, exist_ok=True)
    stage_seconds: dict[str, float] = {}
    tasks: list[TaskResult] = []

    start = time.perf_counter()
    runtime = build_runtime(config)
    stage_index(config, runtime)
    stage_seconds["index"] = time.perf_counter() - start

    start = time.perf_counter()
    tasks.extend(stage_select(config, runtime))
    stage_seconds["select"] = time.perf_counter() - start

    start = time.perf_counter()
    tasks.extend(stage_topics(config, runtime))
    stage_seconds["topics"] = time.perf_counter() - start

    start = time.perf_counter()
    tasks.extend(stage_evaluate(config, runtime))
    stage_seconds["evaluate"] = time.perf_counter() - start

    start = time.perf_counter()
    tasks.extend(emit_report(config.out_dir, plots=plots))
    stage_seconds["report"] = time.perf_counter() - start

    manifest = RunManifest(
        config=config.snapshot(),
        tool_version=__version__,
        tasks=tasks,
        artifacts=hash_artifacts(config.out_dir),
        stage_seconds=stage_seconds,
    )
    _atomic_write_json(config.out_dir / "manifest.json", manifest.to_dict())
    return manifest
