"""Walkthrough: from a skewed corpus to a budget-constrained selection.

We build a synthetic corpus where the target-language training data is
heavily skewed toward two semantic clusters while the usage proxy (eval)
covers five clusters evenly, then watch the sampler pull auxiliary data
into exactly the under-represented regions.

Run:  python demos/01_selection_pipeline.py
"""
from __future__ import annotations

from collections import Counter

import numpy as np

from compass import (
    Dataset,
    EmbeddingMatrix,
    ExampleRecord,
    SamplerConfig,
    assign,
    fit_kmeans,
    js_divergence,
    mismatch_profile,
    run_sampling,
    tabulate_counts,
)
from compass._util import stable_rng, unit_rows

# --- 1. a corpus with a distribution gap ----------------------------------
# target: mostly clusters 0-1; eval: uniform across all five; aux: ample.
rng = stable_rng(0, "demo1")
DIM, K = 8, 5
centers = unit_rows(rng.normal(size=(K, DIM)))

records, rows = [], []
for role, per_cluster in (("target", [40, 40, 10, 5, 5]),
                          ("eval", [40] * 5),
                          ("aux", [120] * 5)):
    for c, n in enumerate(per_cluster):
        for i in range(n):
            v = centers[c] + rng.normal(scale=0.05, size=DIM)
            rows.append(v / np.linalg.norm(v))
            records.append(ExampleRecord(id=f"{role}-{c}-{i}", lang="sw", role=role))
ds = Dataset(tuple(records), EmbeddingMatrix(np.vstack(rows).astype(np.float32)))
print(f"corpus: {len(ds)} records "
      f"({sum(r.role == 'target' for r in ds.records)} target, "
      f"{sum(r.role == 'eval' for r in ds.records)} eval proxy, "
      f"{sum(r.role == 'aux' for r in ds.records)} auxiliary)")

# --- 2. cluster the pooled embeddings --------------------------------------
model, reports = fit_kmeans(ds.embeddings, k_range=(3, 7, 1), seeds_per_k=5, rng_seed=1)
print(f"\nk-means sweep picked K={model.k}:")
for r in reports:
    print(f"  K={int(r.params['k'])}  silhouette={r.silhouette:.4f}")

asn = assign(ds.embeddings, model)

# --- 3. measure the gap -----------------------------------------------------
counts = tabulate_counts(ds, asn)
profile = mismatch_profile(counts)
print("\nper-cluster gap statistics:")
print(f"{'cluster':>8} {'n_t':>5} {'n_eval':>7} {'rho':>7} {'w':>7} {'w_norm':>7}")
for k in range(profile.k):
    rho = "inf" if np.isinf(profile.rho[k]) else f"{profile.rho[k]:.2f}"
    print(f"{k:>8} {profile.n_t[k]:>5} {profile.n_eval[k]:>7} {rho:>7} "
          f"{profile.w[k]:>7.2f} {profile.w_norm[k]:>7.3f}")

# --- 4. sample under a budget -----------------------------------------------
plan = run_sampling(ds, asn, profile, SamplerConfig(budget=0.8, seed=7))
picked = Counter(s.cluster for s in plan.selections)
print(f"\nselected {len(plan.selections)} auxiliary examples "
      f"(budget 0.8 x {plan.target_size} targets)")
print("quota vs picked:", {k: (plan.quotas[k], picked.get(k, 0)) for k in range(profile.k)})

# --- 5. did the gap close? ---------------------------------------------------
def dist(v):
    v = np.asarray(v, float)
    return v / v.sum()

eval_dist = dist(profile.n_eval)
before = js_divergence(dist(profile.n_t), eval_dist)
post = np.asarray(profile.n_t, float) + np.array([picked.get(k, 0) for k in range(profile.k)])
after = js_divergence(dist(post), eval_dist)
print(f"\ntrain-vs-eval divergence: {before:.4f} before -> {after:.4f} after "
      f"({after / before:.1%} of the original gap)")

# the curriculum: early picks sit near centroids, late picks drift outward
data = unit_rows(ds.embeddings.data)
row_of = {r.id: i for i, r in enumerate(ds.records)}
dists = [1.0 - float(data[row_of[s.example_id]] @ model.centroids[s.cluster])
         for s in plan.selections]
third = max(1, len(dists) // 3)
print(f"mean centroid distance: first third {np.mean(dists[:third]):.4f}, "
      f"last third {np.mean(dists[-third:]):.4f} (prototypes first, boundary later)")
