"""Internal cluster-validity indices.

Silhouette uses cosine distance on unit rows and skips noise points.
DBCV follows the density-based validation index: all-points core
distances, mutual-reachability spanning trees per cluster, sparseness
vs. separation, with noise penalized through the |C|/N weighting (N
counts noise). DBCV distances are Euclidean on unit rows, which is
monotone in cosine distance on the sphere.
"""
from __future__ import annotations

import numpy as np

from .._util import cosine_distances, euclidean_distances
from ._types import QualityUndefinedError


def cluster_quality(X, labels, metric: str) -> float:
    """Dispatch to :func:`silhouette_score` or :func:`dbcv_score`."""
    data = X.data if hasattr(X, "data") else np.asarray(X)
    if metric == "silhouette":
        return silhouette_score(data, labels)
    if metric == "dbcv":
        return dbcv_score(data, labels)
    raise ValueError(f"unknown metric {metric!r}")


def silhouette_score(X: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over non-noise points, cosine distance.

    Points in singleton clusters score 0. Raises
    :class:`QualityUndefinedError` for fewer than two non-noise clusters,
    an empty non-noise set, or an all-zero distance mass (identical
    points), where the index carries no information.
    """
    labels = np.asarray(labels, dtype=np.int64)
    mask = labels >= 0
    if not np.any(mask):
        raise QualityUndefinedError("no non-noise points")
    pts = np.asarray(X, dtype=np.float64)[mask]
    labs = labels[mask]
    uniq = np.unique(labs)
    if uniq.size < 2:
        raise QualityUndefinedError("silhouette needs at least two clusters")
    dist = cosine_distances(pts)
    if float(dist.max()) == 0.0:
        raise QualityUndefinedError("all points identical; silhouette undefined")
    n = pts.shape[0]
    # per-point mean distance to each cluster
    sums = np.zeros((n, uniq.size))
    counts = np.zeros(uniq.size, dtype=np.int64)
    for j, c in enumerate(uniq):
        members = labs == c
        counts[j] = int(members.sum())
        sums[:, j] = dist[:, members].sum(axis=1)
    own_col = np.searchsorted(uniq, labs)
    scores = np.zeros(n)
    for i in range(n):
        j = own_col[i]
        if counts[j] == 1:
            scores[i] = 0.0
            continue
        a = sums[i, j] / (counts[j] - 1)
        other = [sums[i, m] / counts[m] for m in range(uniq.size) if m != j]
        b = min(other)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def _all_points_core_distances(dist: np.ndarray, members: np.ndarray, dim: int) -> np.ndarray:
    """apts core distance within one cluster: inverse-distance power mean."""
    sub = dist[np.ix_(members, members)]
    m = sub.shape[0]
    if m < 2:
        return np.zeros(m)
    core = np.zeros(m)
    with np.errstate(divide="ignore", over="ignore"):
        for i in range(m):
            d = np.delete(sub[i], i)
            if np.any(d == 0.0):
                core[i] = 0.0
                continue
            core[i] = (np.mean((1.0 / d) ** dim)) ** (-1.0 / dim)
    return core


def _mst_edges(weights: np.ndarray) -> list[tuple[int, int, float]]:
    """Prim's algorithm on a dense symmetric weight matrix."""
    m = weights.shape[0]
    if m < 2:
        return []
    in_tree = np.zeros(m, dtype=bool)
    best = np.full(m, np.inf)
    best_from = np.zeros(m, dtype=np.int64)
    in_tree[0] = True
    best = weights[0].copy()
    best[0] = np.inf
    edges: list[tuple[int, int, float]] = []
    for _ in range(m - 1):
        nxt = int(np.argmin(np.where(in_tree, np.inf, best)))
        edges.append((int(best_from[nxt]), nxt, float(best[nxt])))
        in_tree[nxt] = True
        closer = weights[nxt] < best
        best_from[closer] = nxt
        best = np.minimum(best, weights[nxt])
    return edges


def dbcv_score(X: np.ndarray, labels: np.ndarray) -> float:
    """Density-based cluster validity in [-1, 1].

    Per cluster: sparseness = the largest edge of the cluster's
    mutual-reachability spanning tree; separation = the smallest mutual
    reachability to any point of another cluster; validity =
    (sep - spars) / max(sep, spars).
    The total weights each cluster by |C| / N with N counting noise, so a
    noisy labeling cannot score as high as a clean one. A single-cluster
    labeling has no separation and scores 0.
    """
    labels = np.asarray(labels, dtype=np.int64)
    pts = np.asarray(X, dtype=np.float64)
    n_total = labels.size
    uniq = [int(c) for c in np.unique(labels) if c >= 0]
    if not uniq:
        raise QualityUndefinedError("no non-noise points")
    if len(uniq) == 1:
        return 0.0
    dim = pts.shape[1]
    dist = euclidean_distances(pts)

    core = np.zeros(n_total)
    members_of: dict[int, np.ndarray] = {}
    sparseness: dict[int, float] = {}
    for c in uniq:
        members = np.nonzero(labels == c)[0]
        members_of[c] = members
        core_c = _all_points_core_distances(dist, members, dim)
        core[members] = core_c
        if members.size < 2:
            sparseness[c] = 0.0
            continue
        sub = dist[np.ix_(members, members)]
        mrd = np.maximum(np.maximum.outer(core_c, core_c), sub)
        np.fill_diagonal(mrd, 0.0)
        edges = _mst_edges(mrd)
        # every spanning tree shares the same weight multiset, so the max
        # edge is well-defined even when mutual reachability is full of ties
        sparseness[c] = max(w for _, _, w in edges)

    total = 0.0
    for c in uniq:
        seps = []
        for other in uniq:
            if other == c:
                continue
            a = members_of[c]
            b = members_of[other]
            d_ab = dist[np.ix_(a, b)]
            mrd_ab = np.maximum(np.maximum.outer(core[a], core[b]), d_ab)
            seps.append(float(mrd_ab.min()))
        separation = min(seps)
        spars = sparseness[c]
        denom = max(separation, spars)
        validity = 0.0 if denom == 0.0 else (separation - spars) / denom
        weight = float(np.sum(labels == c)) / float(n_total)
        total += weight * validity
    return float(total)
