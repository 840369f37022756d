"""Deterministic synthetic fixtures: Gaussian blobs on the unit sphere,
subject-level sampling bias, and phased drift streams.

Every generator is a pure function of its spec and seed, so fixtures are
reproducible byte-for-byte.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import stable_rng, unit_rows
from .core import ClusterModel, CompassError, Dataset, EmbeddingMatrix, ExampleRecord


class SimgenError(CompassError):
    pass


@dataclass(frozen=True)
class BlobSpec:
    n_clusters: int
    points_per_cluster: int
    dim: int
    spread: float
    seed: int

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise SimgenError("dim must be at least 2")
        if self.spread <= 0:
            raise SimgenError("spread must be positive")
        if self.n_clusters < 1 or self.points_per_cluster < 1:
            raise SimgenError("cluster counts must be positive")


def random_unit_vectors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    return unit_rows(rng.normal(size=(n, dim)))


def gen_blobs(
    spec: BlobSpec,
    role: str = "aux",
    lang: str = "xx",
    id_prefix: str = "blob",
) -> tuple[Dataset, np.ndarray]:
    """Isotropic Gaussian blobs around random unit centers, renormalized to
    the sphere. Returns the dataset and its ground-truth labels."""
    rng = stable_rng(spec.seed, "blobs")
    centers = random_unit_vectors(rng, spec.n_clusters, spec.dim)
    rows = []
    records = []
    labels = []
    for c in range(spec.n_clusters):
        noise = rng.normal(scale=spec.spread, size=(spec.points_per_cluster, spec.dim))
        rows.append(unit_rows(centers[c] + noise))
        for i in range(spec.points_per_cluster):
            records.append(
                ExampleRecord(id=f"{id_prefix}-{c}-{i}", lang=lang, role=role)
            )
            labels.append(c)
    data = np.vstack(rows).astype(np.float32)
    return Dataset(tuple(records), EmbeddingMatrix(data)), np.asarray(labels, dtype=np.int64)


def bias_simulate(
    ds: Dataset,
    bucket_prob: float = 0.2,
    retain_frac: float = 0.5,
    seed: int = 0,
) -> Dataset:
    """Subject-level sampling bias on target records only.

    Per language, each subject independently lands in a low-sampling bucket
    with probability ``bucket_prob``; bucketed subjects keep exactly
    ``round(retain_frac * n)`` of their records, chosen uniformly. RNG
    streams derive from (seed, lang), so languages are biased independently.
    """
    if not (0.0 <= bucket_prob <= 1.0) or not (0.0 <= retain_frac <= 1.0):
        raise SimgenError("bucket_prob and retain_frac must lie in [0, 1]")
    target_rows: dict[str, dict[str, list[int]]] = {}
    for i, rec in enumerate(ds.records):
        if rec.role != "target":
            continue
        if rec.subject is None:
            raise SimgenError(f"target record {rec.id!r} has no subject")
        target_rows.setdefault(rec.lang, {}).setdefault(rec.subject, []).append(i)

    drop: set[int] = set()
    for lang in sorted(target_rows):
        rng = stable_rng(seed, "bias", lang)
        for subject in sorted(target_rows[lang]):
            rows = target_rows[lang][subject]
            bucketed = rng.random() < bucket_prob
            if not bucketed or retain_frac >= 1.0:
                continue
            keep_n = int(np.floor(retain_frac * len(rows) + 0.5))
            keep = set(rng.choice(len(rows), size=keep_n, replace=False).tolist())
            drop.update(rows[j] for j in range(len(rows)) if j not in keep)

    keep_idx = [i for i in range(len(ds)) if i not in drop]
    return ds.subset(keep_idx)


@dataclass(frozen=True)
class DriftScript:
    """Ordered stream phases: (tag, cluster mixture, sample count). A
    mixture may carry one extra trailing entry for a noise bin of points
    drawn uniformly on the sphere."""

    phases: tuple[tuple[str, tuple[float, ...], int], ...]
    increment: int = 500

    def __post_init__(self) -> None:
        if len(self.phases) < 2:
            raise SimgenError("a drift script needs at least two phases")
        norm_phases = []
        for tag, mixture, n in self.phases:
            mix = np.asarray(mixture, dtype=np.float64)
            if abs(float(mix.sum()) - 1.0) > 1e-9 or np.any(mix < 0):
                raise SimgenError(f"phase {tag!r} mixture is not a distribution")
            norm_phases.append((str(tag), tuple(float(v) for v in mix), int(n)))
        object.__setattr__(self, "phases", tuple(norm_phases))
        if self.increment < 1:
            raise SimgenError("increment must be positive")


@dataclass(frozen=True)
class DriftStream:
    records: tuple[ExampleRecord, ...]
    embeddings: EmbeddingMatrix
    phase_tags: tuple[str, ...]
    boundaries: tuple[int, ...]  # start index of each phase

    def dataset(self) -> Dataset:
        return Dataset(self.records, self.embeddings)


def gen_drift_stream(
    script: DriftScript,
    model: ClusterModel,
    seed: int,
    spread: float = 0.02,
) -> DriftStream:
    """Emit stream-role points phase by phase: draw a cluster from the
    phase mixture, then a point near that centroid. A trailing mixture
    entry beyond K draws unlocated sphere noise instead."""
    k = model.k
    rng = stable_rng(seed, "drift")
    records: list[ExampleRecord] = []
    rows: list[np.ndarray] = []
    tags: list[str] = []
    boundaries: list[int] = []
    counter = 0
    for tag, mixture, n_samples in script.phases:
        mix = np.asarray(mixture, dtype=np.float64)
        if mix.size not in (k, k + 1):
            raise SimgenError(
                f"phase {tag!r} mixture has {mix.size} entries; model has {k} clusters"
            )
        boundaries.append(counter)
        draws = rng.choice(mix.size, size=n_samples, p=mix)
        for d in draws:
            if d >= k:  # noise bin
                vec = random_unit_vectors(rng, 1, model.dim)[0]
            else:
                vec = model.centroids[d] + rng.normal(scale=spread, size=model.dim)
                vec = vec / np.linalg.norm(vec)
            rows.append(vec)
            records.append(ExampleRecord(id=f"stream-{counter}", lang="xx", role="stream"))
            tags.append(tag)
            counter += 1
    data = np.vstack(rows).astype(np.float32)
    return DriftStream(
        records=tuple(records),
        embeddings=EmbeddingMatrix(data),
        phase_tags=tuple(tags),
        boundaries=tuple(boundaries),
    )
