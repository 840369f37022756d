"""Spherical k-means with k-means++ seeding and silhouette model selection.

Lloyd iterations run on cosine distance, which on unit rows is equivalent
to squared Euclidean up to a factor of two; centroids are renormalized to
the sphere after every mean update, which is the optimal unit-vector
representative under the cosine objective, so inertia never increases.
"""
from __future__ import annotations

import numpy as np

from .._util import stable_rng, unit_rows
from ..core import ClusterModel, EmbeddingMatrix
from ._types import ClusteringError, QualityReport, QualityUndefinedError, normalize_k_range
from .quality import silhouette_score

MAX_LLOYD_ITERATIONS = 300
DEFAULT_K_RANGE = (10, 120, 5)


def _plus_plus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = 1.0 - X @ centers[0]
    np.clip(closest, 0.0, None, out=closest)
    for j in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = X[idx]
        d = 1.0 - X @ centers[j]
        np.clip(d, 0.0, None, out=d)
        np.minimum(closest, d, out=closest)
    return centers


def lloyd_iterate(X: np.ndarray, centers: np.ndarray):
    """Run Lloyd to convergence; returns (centers, labels, inertia)."""
    n = X.shape[0]
    k = centers.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    prev_inertia = np.inf
    for _ in range(MAX_LLOYD_ITERATIONS):
        sims = X @ centers.T
        new_labels = np.argmax(sims, axis=1)
        inertia = float(np.sum(1.0 - sims[np.arange(n), new_labels]))
        if inertia > prev_inertia + 1e-9:
            raise AssertionError(
                f"inertia increased across a Lloyd step: {prev_inertia} -> {inertia}"
            )
        prev_inertia = inertia
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if not np.any(members):
                # reseed an empty cluster at the worst-served point
                worst = int(np.argmin(sims[np.arange(n), labels]))
                centers[j] = X[worst]
            else:
                centers[j] = X[members].mean(axis=0)
        centers = unit_rows(centers)
    sims = X @ centers.T
    labels = np.argmax(sims, axis=1)
    inertia = float(np.sum(1.0 - sims[np.arange(n), labels]))
    return centers, labels, inertia


def fit_kmeans(
    X: EmbeddingMatrix,
    k_range=None,
    seeds_per_k: int = 10,
    rng_seed: int = 0,
) -> tuple[ClusterModel, list[QualityReport]]:
    """Sweep K, keep the best-inertia run per K over ``seeds_per_k``
    restarts, and return the silhouette-maximizing model (ties favor the
    smaller K)."""
    ks = normalize_k_range(k_range, DEFAULT_K_RANGE)
    data = unit_rows(X.data)
    n = data.shape[0]
    if n <= max(ks):
        raise ClusteringError(f"need more than {max(ks)} points, got {n}")

    reports: list[QualityReport] = []
    best: tuple[float, int, np.ndarray, np.ndarray] | None = None  # (-sil, k, centers, labels)
    for k in ks:
        run_best: tuple[float, np.ndarray, np.ndarray] | None = None
        for s in range(seeds_per_k):
            rng = stable_rng(rng_seed, "kmeans", k, s)
            centers = _plus_plus_init(data, k, rng)
            centers, labels, inertia = lloyd_iterate(data, centers.copy())
            if run_best is None or inertia < run_best[0]:
                run_best = (inertia, centers, labels)
        assert run_best is not None
        _, centers, labels = run_best
        try:
            sil = silhouette_score(data, labels)
        except QualityUndefinedError:
            sil = None
        reports.append(
            QualityReport(
                method="kmeans",
                params={"k": float(k)},
                silhouette=sil,
                dbcv=None,
                n_clusters=k,
                noise_fraction=0.0,
            )
        )
        key = -np.inf if sil is None else sil
        if best is None or key > best[0]:
            best = (key, k, centers, labels)
    assert best is not None
    _, k, centers, _ = best
    model = ClusterModel(method="kmeans", k=k, centroids=centers, params={"k": float(k)})
    return model, reports
