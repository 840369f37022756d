"""Walkthrough: stream monitoring, the divergence trigger, and update cycles.

A five-phase stream drifts through four semantic regimes and finally
returns to where it started. The monitor compares a frozen reference
distribution against a sliding window; strict exceedance of the threshold
fires an update cycle, which re-bases the reference on the recent window.

Run:  python demos/02_drift_monitoring.py
"""
from __future__ import annotations

import numpy as np

from compass import (
    BlobSpec,
    DriftScript,
    MonitorState,
    assign,
    build_reference,
    fit_kmeans,
    gen_blobs,
    gen_drift_stream,
)

# --- 1. a fitted semantic space ----------------------------------------------
ds, truth = gen_blobs(BlobSpec(n_clusters=8, points_per_cluster=30, dim=12,
                               spread=0.03, seed=5))
model, _ = fit_kmeans(ds.embeddings, k_range=(8, 8, 1), seeds_per_k=4, rng_seed=5)
fitted = assign(ds.embeddings, model).labels
remap = {gt: int(np.bincount(fitted[truth == gt]).argmax()) for gt in range(8)}

# --- 2. phase mixtures --------------------------------------------------------
# each phase owns one signature cluster (mass 0.24); four common clusters
# share the rest, so consecutive phases sit at a fixed, moderate divergence
def mixture(signature: int) -> tuple[float, ...]:
    m = [0.0] * 8
    m[remap[signature]] = 0.24
    for j in range(4, 8):
        m[remap[j]] += 0.19
    return tuple(m)

phases = tuple((tag, mixture(sig), 2000)
               for tag, sig in (("T1", 0), ("T2", 1), ("T3", 2), ("T4", 3), ("T5", 0)))
script = DriftScript(phases=phases, increment=500)
stream = gen_drift_stream(script, model, seed=42, spread=0.02)
labels = assign(stream.embeddings, model).labels
print(f"stream: {len(stream.records)} samples over {len(phases)} phases "
      f"(T5 returns to T1's mixture)")

# --- 3. run the monitor at three thresholds ------------------------------------
for theta in (0.05, 0.15, 0.30):
    ref_counts = np.round(np.asarray(mixture(0)) * 100).astype(int)
    state = MonitorState(build_reference(ref_counts, np.zeros(8)),
                         n_clusters=8, window_size=1000, theta_js=theta)
    fires = []
    for i, (rec, lbl) in enumerate(zip(stream.records, labels)):
        state.observe(rec.id, int(lbl))
        if (i + 1) % script.increment == 0:
            result = state.check_trigger()
            if result.fired:
                fires.append((i + 1, stream.phase_tags[i], result.js))
                state.complete_update_cycle()  # retrain + re-base the reference
    print(f"\ntheta = {theta:.2f}: {len(fires)} update(s)")
    for sample, tag, js in fires:
        print(f"  sample {sample:>5} ({tag}): divergence {js:.3f}")

print("\nthe middle threshold fires once per real transition and stays quiet "
      "within phases; the loose one double-fires while the window straddles "
      "a boundary; the strict one never reacts at this shift size.")
