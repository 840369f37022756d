"""Ward-linkage hierarchical clustering with a silhouette-selected cut.

The dendrogram is built once on Euclidean distances over unit rows (the
canonical geometry: monotone in cosine on the sphere) and cut at every K
in the sweep range; centroids are per-cluster means renormalized to unit
length.
"""
from __future__ import annotations

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .._util import unit_rows
from ..core import ClusterModel, EmbeddingMatrix
from ._types import ClusteringError, QualityReport, QualityUndefinedError, normalize_k_range
from .quality import silhouette_score

DEFAULT_K_RANGE = (80, 120, 1)


def cut_labels(tree: np.ndarray, k: int) -> np.ndarray:
    """Cut a linkage tree into k flat clusters, relabeled 0..k-1 in order
    of first appearance."""
    raw = fcluster(tree, t=k, criterion="maxclust")
    remap: dict[int, int] = {}
    labels = np.empty(raw.size, dtype=np.int64)
    for i, value in enumerate(raw):
        if value not in remap:
            remap[value] = len(remap)
        labels[i] = remap[value]
    return labels


def centroids_for(data: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    cents = np.zeros((k, data.shape[1]))
    for j in range(k):
        members = labels == j
        if np.any(members):
            cents[j] = data[members].mean(axis=0)
    return unit_rows(cents)


def fit_agglomerative(
    X: EmbeddingMatrix, k_range=None
) -> tuple[ClusterModel, list[QualityReport]]:
    ks = normalize_k_range(k_range, DEFAULT_K_RANGE)
    data = unit_rows(X.data)
    n = data.shape[0]
    if n < 2:
        raise ClusteringError("agglomerative clustering needs at least 2 points")
    if n < max(ks):
        raise ClusteringError(f"need at least {max(ks)} points, got {n}")

    tree = linkage(data, method="ward")
    reports: list[QualityReport] = []
    best: tuple[float, int, np.ndarray] | None = None
    for k in ks:
        labels = cut_labels(tree, k)
        n_found = int(labels.max()) + 1
        try:
            sil = silhouette_score(data, labels)
        except QualityUndefinedError:
            sil = None
        reports.append(
            QualityReport(
                method="agglomerative",
                params={"k": float(k)},
                silhouette=sil,
                dbcv=None,
                n_clusters=n_found,
                noise_fraction=0.0,
            )
        )
        key = -np.inf if sil is None else sil
        if best is None or key > best[0]:
            best = (key, k, labels)
    assert best is not None
    _, k, labels = best
    n_found = int(labels.max()) + 1
    model = ClusterModel(
        method="agglomerative",
        k=n_found,
        centroids=centroids_for(data, labels, n_found),
        params={"k": float(n_found)},
    )
    return model, reports
