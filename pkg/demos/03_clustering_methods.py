"""Walkthrough: the four clustering methods and their validation indices.

The same blob corpus (plus a handful of planted outliers) goes through
k-means, Ward agglomerative, density clustering, and sphere exclusion, so
the quality reports can be compared side by side.

Run:  python demos/03_clustering_methods.py
"""
from __future__ import annotations

import numpy as np

from compass import (
    BlobSpec,
    EmbeddingMatrix,
    assign,
    fit_agglomerative,
    fit_density,
    fit_kmeans,
    fit_taylor_butina,
    gen_blobs,
)
from compass._util import unit_rows

ds, truth = gen_blobs(BlobSpec(n_clusters=4, points_per_cluster=30, dim=10,
                               spread=0.05, seed=11))
rng = np.random.default_rng(1)
blob_data = ds.embeddings.data.astype(np.float64)
outliers = []
while len(outliers) < 6:
    v = unit_rows(rng.normal(size=10))
    if float(np.max(blob_data @ v)) < 0.3:
        outliers.append(v)
X = EmbeddingMatrix(np.vstack([blob_data, np.array(outliers)]).astype(np.float32))
print(f"corpus: {X.count} points = 4 blobs of 30 + 6 planted outliers\n")

# --- centroid methods: silhouette-driven K selection ---------------------------
kmodel, kreports = fit_kmeans(X, k_range=(2, 8, 1), seeds_per_k=5, rng_seed=0)
best = max((r for r in kreports if r.silhouette is not None), key=lambda r: r.silhouette)
print(f"k-means: swept K=2..8, picked K={kmodel.k} "
      f"(silhouette {best.silhouette:.3f})")

amodel, areports = fit_agglomerative(X, k_range=(2, 8, 1))
print(f"ward agglomerative: picked K={amodel.k}")

# --- density: DBCV-driven grid search, noise comes out as -1 --------------------
dmodel, dreports = fit_density(X, grid={"min_cluster_size": [5, 10, 15],
                                        "min_samples": [1, 5]})
labels = assign(X, dmodel).labels
print(f"\ndensity: grid of (min_cluster_size, min_samples) cells")
for r in dreports:
    score = "n/a" if r.dbcv is None else f"{r.dbcv:+.3f}"
    print(f"  mcs={int(r.params['min_cluster_size']):>2} ms={int(r.params['min_samples'])} "
          f"-> dbcv {score:>7}, {r.n_clusters} clusters, "
          f"{r.noise_fraction:.1%} noise")
print(f"winner: mcs={int(dmodel.params['min_cluster_size'])} "
      f"ms={int(dmodel.params['min_samples'])}; "
      f"{int(np.sum(labels == -1))} points labeled noise "
      f"(the planted outliers: {np.all(labels[-6:] == -1)})")

# --- sphere exclusion: threshold search under a coverage floor ------------------
bmodel, breports = fit_taylor_butina(X, t_min=0.70, t_max=0.95, coverage=0.90)
print(f"\nsphere exclusion: threshold {bmodel.params['threshold']:.4f} "
      f"covers {bmodel.params['coverage']:.1%} in {bmodel.k} clusters")
print("probed thresholds:")
for r in breports:
    print(f"  t={r.params['threshold']:.4f} -> {r.n_clusters} clusters, "
          f"{1 - r.noise_fraction:.1%} assigned")

# --- assignment of new points ----------------------------------------------------
all_points = X.data.astype(np.float64)
far = unit_rows(rng.normal(size=10))
while float(np.max(all_points @ far)) > 0.2:
    far = unit_rows(rng.normal(size=10))
print(f"\nnew-point assignment:")
print(f"  centroid-method label for its own centroid: "
      f"{assign(kmodel.centroids[:1].astype(np.float32), kmodel).labels[0]}")
print(f"  density label for a far-away probe: "
      f"{assign(far[None, :].astype(np.float32), dmodel).labels[0]} (noise)")
