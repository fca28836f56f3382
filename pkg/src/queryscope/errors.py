"""Exception types shared across the package."""


class QueryscopeError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(QueryscopeError):
    """Corpus files or documents violate the corpus contract."""


class EmbeddingError(QueryscopeError):
    """Embedding stores, providers, or vector files are inconsistent."""


class SearchError(QueryscopeError):
    """Retrieval preconditions violated (empty query, empty index, ...)."""


class TopicModelError(QueryscopeError):
    """Topic model preconditions or file schemas violated."""


class EvaluationError(QueryscopeError):
    """Metric preconditions violated (empty topic sets, bad qrels, ...)."""


class ConfigError(QueryscopeError):
    """Run configuration is invalid or references missing inputs."""
