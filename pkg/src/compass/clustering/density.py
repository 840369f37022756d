"""Density clustering: core distances, mutual reachability, a Prim
spanning tree, single-linkage condensation, and excess-of-mass cluster
extraction.

The condensed hierarchy is retained on the model together with the fitted
points and their core distances, so new points can later be placed into
the frozen tree (transductive assignment) without refitting: a point
attaches where its mutual-reachability to the fitted set would have
connected it, and is noise if that level lies above every selected
cluster's birth.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .._util import euclidean_distances, unit_rows
from ..core import ClusterModel, EmbeddingMatrix
from ._types import ClusteringError, DegenerateInputError, QualityReport, QualityUndefinedError
from .agglomerative import centroids_for
from .quality import dbcv_score

DEFAULT_GRID = {"min_cluster_size": [5, 10, 15, 20], "min_samples": [1, 5, 10]}


@dataclass(frozen=True)
class CondensedHierarchy:
    """Condensed tree rows plus everything needed to place new points."""

    parent: np.ndarray  # condensed cluster id per row
    child: np.ndarray  # point id (< n) or condensed cluster id per row
    lam: np.ndarray  # 1 / mutual-reachability level of the departure/birth
    size: np.ndarray  # child size in points
    root: int
    n_points: int
    selected: tuple[int, ...]
    points: np.ndarray  # fitted rows, float32 (n, d)
    core_distances: np.ndarray
    min_samples: int
    min_cluster_size: int
    # derived lookups, rebuilt on construction
    birth: Mapping[int, float] = field(default_factory=dict, compare=False)
    cluster_parent: Mapping[int, int] = field(default_factory=dict, compare=False)
    point_parent: np.ndarray = field(default=None, compare=False)  # type: ignore[assignment]
    label_of: Mapping[int, int] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        parent = np.asarray(self.parent, dtype=np.int64)
        child = np.asarray(self.child, dtype=np.int64)
        lam = np.asarray(self.lam, dtype=np.float64)
        size = np.asarray(self.size, dtype=np.int64)
        pts = np.ascontiguousarray(self.points, dtype=np.float32)
        core = np.asarray(self.core_distances, dtype=np.float64)
        birth: dict[int, float] = {self.root: 0.0}
        cluster_parent: dict[int, int] = {}
        point_parent = np.full(self.n_points, self.root, dtype=np.int64)
        for p, c, l in zip(parent, child, lam):
            if c < self.n_points:
                point_parent[c] = p
            else:
                birth[int(c)] = float(l)
                cluster_parent[int(c)] = int(p)
        label_of = {node: idx for idx, node in enumerate(sorted(self.selected))}
        for name, value in (
            ("parent", parent),
            ("child", child),
            ("lam", lam),
            ("size", size),
            ("points", pts),
            ("core_distances", core),
            ("selected", tuple(int(s) for s in self.selected)),
            ("birth", birth),
            ("cluster_parent", cluster_parent),
            ("point_parent", point_parent),
            ("label_of", label_of),
        ):
            object.__setattr__(self, name, value)

    def chain_to_root(self, node: int) -> list[int]:
        chain = [node]
        while chain[-1] != self.root:
            chain.append(self.cluster_parent[chain[-1]])
        return chain


def _core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest other point."""
    n = dist.shape[0]
    if min_samples >= n:
        raise ClusteringError(f"min_samples={min_samples} needs more than {n} points")
    work = dist.copy()
    np.fill_diagonal(work, np.inf)
    part = np.partition(work, min_samples - 1, axis=1)
    return part[:, min_samples - 1]


def _prim_mst(weights: np.ndarray) -> np.ndarray:
    """Dense Prim; returns (n-1, 3) rows of (u, v, weight)."""
    n = weights.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = weights[0].copy()
    best[0] = np.inf
    best_from = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3))
    for i in range(n - 1):
        nxt = int(np.argmin(np.where(in_tree, np.inf, best)))
        edges[i] = (best_from[nxt], nxt, best[nxt])
        in_tree[nxt] = True
        closer = weights[nxt] < best
        best_from[closer] = nxt
        best = np.minimum(best, weights[nxt])
    return edges


def _single_linkage(edges: np.ndarray, n: int) -> np.ndarray:
    """Union-find over weight-sorted edges -> (n-1, 4) linkage rows of
    (left node, right node, distance, size)."""
    order = np.argsort(edges[:, 2], kind="stable")
    uf_parent = np.arange(2 * n - 1, dtype=np.int64)
    current_node = np.arange(n, dtype=np.int64)  # uf root -> linkage node id
    sizes = np.ones(2 * n - 1, dtype=np.int64)

    def find(x: int) -> int:
        while uf_parent[x] != x:
            uf_parent[x] = uf_parent[uf_parent[x]]
            x = uf_parent[x]
        return x

    tree = np.empty((n - 1, 4))
    for i, e in enumerate(order):
        u, v, w = int(edges[e, 0]), int(edges[e, 1]), float(edges[e, 2])
        ru, rv = find(u), find(v)
        node_u, node_v = current_node[ru], current_node[rv]
        new_id = n + i
        tree[i] = (node_u, node_v, w, sizes[node_u] + sizes[node_v])
        uf_parent[ru] = rv
        current_node[rv] = new_id
        sizes[new_id] = sizes[node_u] + sizes[node_v]
    return tree


def _leaves_under(tree: np.ndarray, node: int, n: int) -> list[int]:
    stack, leaves = [node], []
    while stack:
        cur = stack.pop()
        if cur < n:
            leaves.append(cur)
        else:
            row = tree[cur - n]
            stack.extend((int(row[0]), int(row[1])))
    return leaves


def _condense(tree: np.ndarray, n: int, min_cluster_size: int):
    """Collapse the single-linkage tree: splits survive only when both
    sides hold at least min_cluster_size points; smaller sides fall out as
    individual points at the split level."""
    root = 2 * n - 2
    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    stack = [root]
    while stack:
        node = stack.pop()
        row = tree[node - n]
        left, right, dist = int(row[0]), int(row[1]), float(row[2])
        lam = np.inf if dist == 0.0 else 1.0 / dist
        sides = []
        for side in (left, right):
            count = 1 if side < n else int(tree[side - n, 3])
            sides.append((side, count))
        big = [s for s in sides if s[1] >= min_cluster_size]
        parent = relabel[node]
        if len(big) == 2:
            for side, count in sides:
                if side < n:  # bare point side, only reachable at mcs == 1
                    rows.append((parent, side, lam, 1))
                    continue
                relabel[side] = next_label
                rows.append((parent, next_label, lam, count))
                next_label += 1
                stack.append(side)
        elif len(big) == 1:
            keep, _ = big[0]
            relabel[keep] = parent
            if keep >= n:
                stack.append(keep)
            for side, _count in sides:
                if side is keep:
                    continue
                for leaf in _leaves_under(tree, side, n):
                    rows.append((parent, leaf, lam, 1))
        else:
            for side, _count in sides:
                for leaf in _leaves_under(tree, side, n):
                    rows.append((parent, leaf, lam, 1))
    parent_arr = np.array([r[0] for r in rows], dtype=np.int64)
    child_arr = np.array([r[1] for r in rows], dtype=np.int64)
    lam_arr = np.array([r[2] for r in rows], dtype=np.float64)
    size_arr = np.array([r[3] for r in rows], dtype=np.int64)
    return parent_arr, child_arr, lam_arr, size_arr, n


def _stability(parent, child, lam, size, root):
    birth: dict[int, float] = {int(root): 0.0}
    for p, c, l in zip(parent, child, lam):
        if int(c) >= root:
            birth[int(c)] = float(l)
    stability: dict[int, float] = {node: 0.0 for node in birth}
    for p, _c, l, s in zip(parent, child, lam, size):
        stability[int(p)] += (float(l) - birth[int(p)]) * int(s)
    return birth, stability


def _excess_of_mass(parent, child, root, stability):
    cluster_children: dict[int, list[int]] = {int(root): []}
    for p, c in zip(parent, child):
        if int(c) >= root:
            cluster_children.setdefault(int(p), []).append(int(c))
            cluster_children.setdefault(int(c), [])
    work = dict(stability)
    is_cluster = {node: node != int(root) for node in cluster_children}
    for node in sorted(cluster_children, reverse=True):
        if node == int(root):
            continue
        subtree = sum(work[c] for c in cluster_children[node])
        if cluster_children[node] and work[node] < subtree:
            work[node] = subtree
            is_cluster[node] = False
        else:
            stack = list(cluster_children[node])
            while stack:
                desc = stack.pop()
                is_cluster[desc] = False
                stack.extend(cluster_children[desc])
    return tuple(sorted(node for node, keep in is_cluster.items() if keep))


def _flat_labels(parent, child, root, n, selected):
    cluster_children: dict[int, list[int]] = {}
    point_rows: dict[int, list[int]] = {}
    for p, c in zip(parent, child):
        p, c = int(p), int(c)
        if c >= root:
            cluster_children.setdefault(p, []).append(c)
        else:
            point_rows.setdefault(p, []).append(c)
    labels = np.full(n, -1, dtype=np.int64)
    for label, node in enumerate(sorted(selected)):
        stack = [node]
        while stack:
            cur = stack.pop()
            for pt in point_rows.get(cur, []):
                labels[pt] = label
            stack.extend(cluster_children.get(cur, []))
    return labels


def hdbscan_single(data: np.ndarray, min_cluster_size: int, min_samples: int):
    """One full density-clustering pass; returns (labels, hierarchy)."""
    n = data.shape[0]
    dist = euclidean_distances(data)
    if float(dist.max()) == 0.0:
        raise DegenerateInputError("all points identical: mutual reachability is zero everywhere")
    core = _core_distances(dist, min_samples)
    mrd = np.maximum(np.maximum.outer(core, core), dist)
    np.fill_diagonal(mrd, 0.0)
    edges = _prim_mst(mrd)
    tree = _single_linkage(edges, n)
    parent, child, lam, size, _ = _condense(tree, n, min_cluster_size)
    root = n
    _births, stability = _stability(parent, child, lam, size, root)
    selected = _excess_of_mass(parent, child, root, stability)
    labels = _flat_labels(parent, child, root, n, selected)
    hierarchy = CondensedHierarchy(
        parent=parent,
        child=child,
        lam=lam,
        size=size,
        root=root,
        n_points=n,
        selected=selected,
        points=data.astype(np.float32),
        core_distances=core,
        min_samples=min_samples,
        min_cluster_size=min_cluster_size,
    )
    return labels, hierarchy


def fit_density(X: EmbeddingMatrix, grid=None) -> tuple[ClusterModel, list[QualityReport]]:
    """Grid-search (min_cluster_size, min_samples) and keep the cell with
    the best density-validity score."""
    grid = dict(DEFAULT_GRID) if grid is None else dict(grid)
    sizes = list(grid.get("min_cluster_size", []))
    samples = list(grid.get("min_samples", []))
    if not sizes or not samples:
        raise ClusteringError("empty hyperparameter grid")
    data = unit_rows(X.data)
    n = data.shape[0]
    if n < 2 * max(sizes):
        raise ClusteringError(f"need at least {2 * max(sizes)} points, got {n}")

    reports: list[QualityReport] = []
    best = None  # (dbcv, labels, hierarchy)
    for mcs in sizes:
        for ms in samples:
            labels, hierarchy = hdbscan_single(data, mcs, ms)
            n_clusters = int(labels.max()) + 1 if np.any(labels >= 0) else 0
            try:
                score = dbcv_score(data, labels) if n_clusters >= 1 else None
            except QualityUndefinedError:
                score = None
            reports.append(
                QualityReport(
                    method="density",
                    params={"min_cluster_size": float(mcs), "min_samples": float(ms)},
                    silhouette=None,
                    dbcv=score,
                    n_clusters=n_clusters,
                    noise_fraction=float(np.mean(labels < 0)),
                )
            )
            key = -np.inf if score is None else score
            if best is None or key > best[0]:
                best = (key, labels, hierarchy)
    assert best is not None
    score, labels, hierarchy = best
    if score == -np.inf:
        raise ClusteringError("no grid cell produced any cluster")
    k = int(labels.max()) + 1
    model = ClusterModel(
        method="density",
        k=k,
        centroids=centroids_for(data, labels, k),
        hierarchy=hierarchy,
        params={
            "min_cluster_size": float(hierarchy.min_cluster_size),
            "min_samples": float(hierarchy.min_samples),
        },
    )
    return model, reports


def fitted_labels(model: ClusterModel) -> np.ndarray:
    """Recover the training-point labels from a density model's tree."""
    h: CondensedHierarchy = model.hierarchy  # type: ignore[assignment]
    return _flat_labels(h.parent, h.child, h.root, h.n_points, h.selected)


def assign_to_tree(model: ClusterModel, X_new: np.ndarray) -> np.ndarray:
    """Place new points into the frozen condensed tree.

    Each point attaches next to its mutual-reachability nearest fitted
    point at level 1/mr; walking up from that point's leaf cluster, the
    point belongs to the deepest cluster already born at that level. It is
    noise when that position lies strictly above the chain's selected
    cluster.
    """
    if model.hierarchy is None:
        raise ClusteringError("model has no retained hierarchy")
    h: CondensedHierarchy = model.hierarchy  # type: ignore[assignment]
    stored = unit_rows(h.points.astype(np.float64))
    new = unit_rows(np.asarray(X_new, dtype=np.float64))
    if new.ndim == 1:
        new = new[None, :]
    if new.shape[1] != stored.shape[1]:
        raise ClusteringError(f"dimension mismatch: {new.shape[1]} vs {stored.shape[1]}")
    dist = euclidean_distances(new, stored)
    core_new = np.partition(dist, h.min_samples - 1, axis=1)[:, h.min_samples - 1]
    labels = np.empty(new.shape[0], dtype=np.int64)
    for i in range(new.shape[0]):
        mr = np.maximum(np.maximum(core_new[i], h.core_distances), dist[i])
        j = int(np.argmin(mr))
        lam_x = np.inf if mr[j] == 0.0 else 1.0 / mr[j]
        chain = h.chain_to_root(int(h.point_parent[j]))
        sel_idx = next((idx for idx, node in enumerate(chain) if node in h.label_of), None)
        pos = 0
        while chain[pos] != h.root and lam_x < h.birth[chain[pos]]:
            pos += 1
        if sel_idx is None or pos > sel_idx:
            labels[i] = -1
        else:
            labels[i] = h.label_of[chain[sel_idx]]
    return labels


# ---------------------------------------------------------------------------
# serialization helpers used by dataio


def hierarchy_to_payload(h: CondensedHierarchy) -> dict:
    from ..dataio import encode_f32_block, encode_f64_block

    return {
        "parent": [int(v) for v in h.parent],
        "child": [int(v) for v in h.child],
        "lam": [float(v) if np.isfinite(v) else "inf" for v in h.lam],
        "size": [int(v) for v in h.size],
        "root": int(h.root),
        "n_points": int(h.n_points),
        "selected": [int(v) for v in h.selected],
        "dim": int(h.points.shape[1]),
        "points": encode_f32_block(h.points),
        "core_distances": encode_f64_block(h.core_distances),
        "min_samples": int(h.min_samples),
        "min_cluster_size": int(h.min_cluster_size),
    }


def hierarchy_from_payload(doc: dict) -> CondensedHierarchy:
    from ..dataio import decode_f32_block, decode_f64_block

    lam = np.array([np.inf if v == "inf" else float(v) for v in doc["lam"]])
    n = int(doc["n_points"])
    return CondensedHierarchy(
        parent=np.asarray(doc["parent"], dtype=np.int64),
        child=np.asarray(doc["child"], dtype=np.int64),
        lam=lam,
        size=np.asarray(doc["size"], dtype=np.int64),
        root=int(doc["root"]),
        n_points=n,
        selected=tuple(int(v) for v in doc["selected"]),
        points=decode_f32_block(doc["points"], (n, int(doc["dim"]))),
        core_distances=decode_f64_block(doc["core_distances"], (n,)),
        min_samples=int(doc["min_samples"]),
        min_cluster_size=int(doc["min_cluster_size"]),
    )
