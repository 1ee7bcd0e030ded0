"""Exception taxonomy shared across the harness."""

from __future__ import annotations


class PoolrankError(Exception):
    """Base class for all harness errors."""


class MalformedRecord(PoolrankError):
    """Dataset record is missing a required field."""


class EmptySummary(PoolrankError):
    """Cluster summary yields no sentence, so no query can be derived."""


class SchemaError(PoolrankError):
    """A persisted file violates its schema."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class ParseFailure(PoolrankError):
    """Model response did not contain a valid strict-JSON ranking."""


class MissingFixture(PoolrankError):
    def __init__(self, model: str, cluster_id: str):
        super().__init__(f"no recorded response for model={model} cluster={cluster_id}")
        self.model = model
        self.cluster_id = cluster_id


class GatewayUnreachable(PoolrankError):
    """Gateway endpoint could not be reached."""


class BackendError(PoolrankError):
    """Gateway reached but the upstream model backend failed."""

    def __init__(self, model: str, detail: str, retriable: bool = False):
        super().__init__(f"backend error for model={model}: {detail}")
        self.model = model
        self.detail = detail
        self.retriable = retriable


class CacheMiss(PoolrankError):
    """Embedding requested in offline mode is not in the cache."""


class ZeroVector(PoolrankError):
    """All-zero vector cannot be normalized."""


class DimensionMismatch(PoolrankError):
    """Provider returned vectors of inconsistent dimension."""


class BudgetOutOfRange(PoolrankError):
    """Selection budget k outside [1, pool size]."""


class BudgetTooSmall(PoolrankError):
    """Pairwise metric needs at least two selected documents."""


class NoSummarySentences(PoolrankError):
    """Semantic coverage needs at least one summary sentence."""


class LengthMismatch(PoolrankError):
    """Rankings compared over different index sets."""


class TooFewSamples(PoolrankError):
    """Paired bootstrap needs at least two clusters."""


class MissingMetrics(PoolrankError):
    def __init__(self, ranker_id: str, k: int):
        super().__init__(f"no metrics for ranker={ranker_id} k={k}")
        self.ranker_id = ranker_id
        self.k = k


class MissingAgreement(PoolrankError):
    """Agreement rows absent for a configured ranker pair."""


class MissingComparisons(PoolrankError):
    """Delta rows absent for a required (model, metric, comparison, k) cell."""


class ConfigError(PoolrankError):
    """Run configuration is invalid."""


class StageError(PoolrankError):
    """A pipeline stage failed; names the stage and offending cluster."""

    def __init__(self, stage: str, message: str, cluster_id: str | None = None):
        where = f"stage={stage}" + (f" cluster={cluster_id}" if cluster_id else "")
        super().__init__(f"{where}: {message}")
        self.stage = stage
        self.cluster_id = cluster_id


class LockError(PoolrankError):
    """Run directory is owned by another process."""
