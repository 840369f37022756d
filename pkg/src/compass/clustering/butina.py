"""Sphere-exclusion clustering with an adaptive similarity threshold.

Classic greedy pass: points sorted by neighbor count claim themselves and
their unclaimed neighbors; a point whose turn arrives with no unclaimed
neighbors is left unassigned (-1). The working threshold is found by
binary search over [t_min, t_max]: raising it fragments clusters (more of
them) but strands more points, so the search walks the feasibility
boundary where the assigned fraction still meets the coverage floor and
returns the probed feasible threshold with the most non-singleton
clusters.
"""
from __future__ import annotations

import numpy as np

from .._util import unit_rows
from ..core import ClusterModel, EmbeddingMatrix
from ._types import ClusteringError, CoverageError, QualityReport, QualityUndefinedError
from .agglomerative import centroids_for
from .quality import silhouette_score

MAX_SEARCH_ITERATIONS = 20
THRESHOLD_TOLERANCE = 1e-3


def sphere_exclusion(similarity: np.ndarray, threshold: float) -> np.ndarray:
    """One greedy pass at a fixed similarity threshold; returns labels with
    -1 for points that could not join a multi-member cluster."""
    n = similarity.shape[0]
    adjacency = similarity >= threshold
    np.fill_diagonal(adjacency, False)
    neighbor_counts = adjacency.sum(axis=1)
    order = np.lexsort((np.arange(n), -neighbor_counts))
    labels = np.full(n, -1, dtype=np.int64)
    claimed = np.zeros(n, dtype=bool)
    next_label = 0
    for center in order:
        if claimed[center]:
            continue
        members = np.nonzero(adjacency[center] & ~claimed)[0]
        claimed[center] = True
        if members.size == 0:
            continue  # stranded: stays -1
        labels[center] = next_label
        labels[members] = next_label
        claimed[members] = True
        next_label += 1
    return labels


def fit_taylor_butina(
    X: EmbeddingMatrix,
    t_min: float = 0.70,
    t_max: float = 0.95,
    coverage: float = 0.95,
) -> tuple[ClusterModel, list[QualityReport]]:
    if not (0.0 < t_min < t_max < 1.0):
        raise ClusteringError(f"need 0 < t_min < t_max < 1, got ({t_min}, {t_max})")
    data = unit_rows(X.data)
    n = data.shape[0]
    if n < 2:
        raise ClusteringError("sphere exclusion needs at least 2 points")
    similarity = data @ data.T

    def evaluate(threshold: float):
        labels = sphere_exclusion(similarity, threshold)
        assigned = float(np.mean(labels >= 0))
        n_clusters = int(labels.max()) + 1 if np.any(labels >= 0) else 0
        return labels, assigned, n_clusters

    probes: dict[float, tuple[np.ndarray, float, int]] = {}
    for t in (t_min, t_max):
        probes[t] = evaluate(t)

    lo, hi = t_min, t_max
    if probes[t_max][1] >= coverage:
        lo = t_max
    elif probes[t_min][1] < coverage:
        lo = None  # infeasible everywhere in range
    else:
        for _ in range(MAX_SEARCH_ITERATIONS):
            if hi - lo <= THRESHOLD_TOLERANCE:
                break
            mid = 0.5 * (lo + hi)
            probes[mid] = evaluate(mid)
            if probes[mid][1] >= coverage:
                lo = mid
            else:
                hi = mid

    if lo is None:
        best_t = max(probes, key=lambda t: probes[t][1])
        raise CoverageError(coverage, probes[best_t][1], best_t)

    feasible = [(t, *stats) for t, stats in probes.items() if stats[1] >= coverage]
    # most non-singleton clusters; ties favor the stricter threshold
    best_t, labels, assigned, n_clusters = max(feasible, key=lambda row: (row[3], row[0]))

    reports = []
    for t in sorted(probes):
        p_labels, p_assigned, p_clusters = probes[t]
        try:
            sil = silhouette_score(data, p_labels) if p_clusters >= 2 else None
        except QualityUndefinedError:
            sil = None
        reports.append(
            QualityReport(
                method="butina",
                params={"threshold": float(t)},
                silhouette=sil,
                dbcv=None,
                n_clusters=p_clusters,
                noise_fraction=float(np.mean(p_labels < 0)),
            )
        )
    model = ClusterModel(
        method="butina",
        k=n_clusters,
        centroids=centroids_for(data, labels, n_clusters),
        params={"threshold": float(best_t), "coverage": float(assigned)},
    )
    return model, reports
