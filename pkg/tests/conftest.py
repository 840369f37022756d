from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from compass import BlobSpec, Dataset, EmbeddingMatrix, ExampleRecord, gen_blobs
from compass._util import stable_rng, unit_rows


@pytest.fixture
def three_blobs():
    """60 well-separated points in 3 clusters, dim 8."""
    return gen_blobs(BlobSpec(n_clusters=3, points_per_cluster=20, dim=8, spread=0.05, seed=7))


def make_pipeline_dataset(
    seed: int = 0,
    n_target=(40, 40, 10, 5, 5),
    n_eval=(40, 40, 40, 40, 40),
    n_aux=(120, 120, 120, 120, 120),
    dim: int = 8,
    spread: float = 0.05,
):
    """A skewed-target / uniform-eval / ample-aux fixture around K unit
    centers; returns (dataset, centers, true labels)."""
    rng = stable_rng(seed, "pipeline-fixture")
    k = len(n_target)
    centers = unit_rows(rng.normal(size=(k, dim)))
    records, rows, labels = [], [], []
    for role, per_cluster, prefix in (
        ("target", n_target, "t"),
        ("eval", n_eval, "e"),
        ("aux", n_aux, "a"),
    ):
        for c, n in enumerate(per_cluster):
            for i in range(n):
                v = centers[c] + rng.normal(scale=spread, size=dim)
                rows.append(v / np.linalg.norm(v))
                records.append(
                    ExampleRecord(id=f"{prefix}-{c}-{i}", lang="sw", role=role, subject=f"s{c}")
                )
                labels.append(c)
    data = np.vstack(rows).astype(np.float32)
    return Dataset(tuple(records), EmbeddingMatrix(data)), centers, np.asarray(labels)


@pytest.fixture
def pipeline_dataset():
    return make_pipeline_dataset()
