"""Shared domain types: corpus records, embedding matrices, cluster models,
assignments, and adapter routing.

All types here are immutable after construction and safe to share across
threads. Embedding rows are expected to be unit-normalized; violations are
reported by :func:`validate_dataset` rather than silently repaired.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

ROLES = ("target", "aux", "eval", "stream")
CLUSTER_METHODS = ("kmeans", "agglomerative", "density", "butina")

# max deviation of a row L2 norm from 1.0 before it counts as a violation
NORM_TOL = 1e-4


class CompassError(Exception):
    """Base class for errors raised by this package."""


class RoutingError(CompassError):
    """Adapter resolution exhausted every fallback."""


@dataclass(frozen=True)
class ExampleRecord:
    """One corpus item. ``role`` partitions the corpus into the target
    training set, the auxiliary pool, the usage proxy, and incoming stream
    traffic."""

    id: str
    lang: str
    role: str
    subject: str | None = None
    text: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """An (n, d) float32 matrix of row vectors, one per record.

    Construction coerces to C-contiguous float32 and freezes the buffer.
    Row normalization is *not* enforced here (see :func:`validate_dataset`);
    the file reader in :mod:`compass.dataio` rejects non-normalized rows at
    the ingestion boundary.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise ValueError("embedding dimension must be positive")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def count(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.data.astype(np.float64), axis=1)


@dataclass(frozen=True)
class Dataset:
    """Records paired index-for-index with their embedding rows."""

    records: tuple[ExampleRecord, ...]
    embeddings: EmbeddingMatrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    def indices_for_role(self, role: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.records) if r.role == role], dtype=np.int64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        idx = np.asarray(list(indices), dtype=np.int64)
        recs = tuple(self.records[i] for i in idx)
        emb = EmbeddingMatrix(self.embeddings.data[idx]) if len(idx) else EmbeddingMatrix(
            np.zeros((0, self.embeddings.dim), dtype=np.float32)
        )
        return Dataset(recs, emb)


@dataclass(frozen=True)
class ClusterModel:
    """A fitted clustering: unit-normalized centroids plus, for the density
    method, the condensed hierarchy needed for transductive assignment."""

    method: str
    k: int
    centroids: np.ndarray
    hierarchy: object | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.method not in CLUSTER_METHODS:
            raise ValueError(f"unknown clustering method {self.method!r}")
        if self.k < 1:
            raise ValueError("cluster count must be >= 1")
        cents = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if cents.shape[0] != self.k:
            raise ValueError(f"expected {self.k} centroid rows, got {cents.shape[0]}")
        norms = np.linalg.norm(cents, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError("centroid rows must be unit-normalized")
        if (self.hierarchy is not None) != (self.method == "density"):
            raise ValueError("hierarchy must be present iff method == 'density'")
        cents.flags.writeable = False
        object.__setattr__(self, "centroids", cents)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


@dataclass(frozen=True)
class Assignment:
    """Per-example cluster labels; -1 marks noise (density/butina only)."""

    labels: np.ndarray
    source_model: ClusterModel

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be 1-D")
        if labels.size and (labels.min() < -1 or labels.max() >= self.source_model.k):
            raise ValueError("labels out of range for the source model")
        if self.source_model.method in ("kmeans", "agglomerative") and np.any(labels == -1):
            raise ValueError(f"{self.source_model.method} assignments never contain noise")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.size)


@dataclass(frozen=True)
class AdapterRegistry:
    """Language -> adapter-id table with the fixed fallback chain
    [language adapter, target-only adapter, pretrained base]."""

    entries: Mapping[str, str]
    default_adapter: str | None = None  # the target-only adapter
    base_model: str | None = None  # the pretrained base
    policy: tuple[str, ...] = ("language", "target-only", "base")

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", dict(self.entries))
        if self.policy != ("language", "target-only", "base"):
            raise ValueError("fallback policy order is fixed")


@dataclass(frozen=True)
class Violation:
    """One failed dataset invariant. ``rows`` lists every offending index."""

    kind: str
    rows: tuple[int, ...]
    detail: str


def validate_dataset(ds: Dataset) -> list[Violation]:
    """Check every dataset invariant; returns one violation per failure.

    An empty result means the dataset is well-formed. Violations are data,
    not exceptions: callers decide whether to reject.
    """
    violations: list[Violation] = []
    n_records = len(ds.records)
    if n_records == 0:
        violations.append(Violation("empty", (), "dataset has no records"))
    if ds.embeddings.count != n_records:
        violations.append(
            Violation(
                "count-mismatch",
                (),
                f"{n_records} records vs {ds.embeddings.count} embedding rows",
            )
        )
    seen: dict[str, list[int]] = {}
    for i, rec in enumerate(ds.records):
        seen.setdefault(rec.id, []).append(i)
    for rec_id, rows in seen.items():
        if len(rows) > 1:
            violations.append(
                Violation("duplicate-id", tuple(rows), f"id {rec_id!r} appears at rows {rows}")
            )
    norms = ds.embeddings.row_norms()
    bad = np.nonzero(np.abs(norms - 1.0) > NORM_TOL)[0]
    for i in bad:
        violations.append(
            Violation("normalization", (int(i),), f"row {int(i)} has L2 norm {norms[i]:.6g}")
        )
    return violations


def resolve_adapter(lang: str, reg: AdapterRegistry, has_target_data: bool) -> str:
    """Resolve the adapter for a language tag via the fixed fallback chain.

    Pure function of its inputs: language adapter if registered, else the
    target-only adapter when fine-tuning data exists, else the pretrained
    base.
    """
    if lang in reg.entries:
        return reg.entries[lang]
    if has_target_data and reg.default_adapter is not None:
        return reg.default_adapter
    if reg.base_model is not None:
        return reg.base_model
    raise RoutingError(
        f"no adapter for lang {lang!r}: fallbacks exhausted and no base model configured"
    )
