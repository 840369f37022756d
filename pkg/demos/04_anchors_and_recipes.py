"""Walkthrough: rehearsal anchors and the update-cycle training recipe.

After a selection round, the most prototypical members of each cluster are
frozen into an anchor buffer. When drift later forces a retrain, the
emitted recipe names the new manifest, the anchors to rehearse, and the
consolidation strengths for the composite update loss.

Run:  python demos/04_anchors_and_recipes.py
"""
from __future__ import annotations

import io
from collections import Counter

from compass import (
    SamplerConfig,
    assign,
    build_manifest,
    dataio,
    emit_recipe,
    fit_kmeans,
    mismatch_profile,
    run_sampling,
    select_anchors,
    tabulate_counts,
)
from compass.core import Assignment
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "tests"))
from conftest import make_pipeline_dataset

# --- 1. a finished selection round ---------------------------------------------
ds, _, _ = make_pipeline_dataset(seed=2)
model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=4, rng_seed=2)
asn = assign(ds.embeddings, model)
profile = mismatch_profile(tabulate_counts(ds, asn))
plan = run_sampling(ds, asn, profile, SamplerConfig(budget=0.8, seed=2))
manifest = build_manifest(plan, ds)
training_ids = set(manifest["target_ids"]) | set(manifest["selected_ids"])
print(f"training set: {len(manifest['target_ids'])} target + "
      f"{len(manifest['selected_ids'])} selected auxiliary")

# --- 2. anchors: per-cluster prototypes, mass-proportional allocation -------------
keep = [i for i, rec in enumerate(ds.records) if rec.id in training_ids]
train_ds = ds.subset(keep)
train_asn = Assignment(labels=asn.labels[keep], source_model=model)

for fraction in (0.01, 0.05, 0.10, 0.20):
    buf = select_anchors(train_ds, train_asn, model, fraction=fraction)
    per = Counter(a.cluster for a in buf.anchors)
    print(f"fraction {fraction:.0%}: {len(buf.anchors):>3} anchors, "
          f"per cluster {dict(sorted(per.items()))}")

buffer = select_anchors(train_ds, train_asn, model, fraction=0.05)
worst = max(a.distance for a in buffer.anchors)
print(f"\nanchors sit near their centroids: max cosine distance {worst:.4f}")

# --- 3. the recipe -----------------------------------------------------------------
recipe = emit_recipe(plan, buffer, manifest_path="manifest.json",
                     training_ids=training_ids)
print(f"\nrecipe: loss tag {recipe.loss_tag}, lambda={recipe.lam}, beta={recipe.beta}, "
      f"{recipe.epochs} epochs, {len(recipe.anchor_ids)} anchor ids")

buf = io.StringIO()
dataio.persist_artifact(recipe, buf)
print("\nserialized form (what a trainer consumes):")
print("\n".join(buf.getvalue().splitlines()[:9]) + "\n  ...")
