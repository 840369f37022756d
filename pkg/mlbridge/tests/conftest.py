from __future__ import annotations

import numpy as np
import pytest

from compass import dataio
from compass.core import EmbeddingMatrix, ExampleRecord
from compass.monitor import TrainingRecipe


def make_phase(n, dim, axis_pos, axis_rev, strength, rev_strength, noise, rng, prefix):
    """Balanced two-class samples: the class signal lives on ``axis_pos``;
    ``axis_rev`` (if given) carries a reversed correlation so training on
    this phase actively unlearns a model keyed to that axis."""
    records, rows = [], []
    for i in range(n):
        y = i % 2
        sign = 1.0 if y == 1 else -1.0
        x = rng.normal(scale=noise, size=dim)
        x[axis_pos] += sign * strength
        if axis_rev is not None:
            x[axis_rev] -= sign * rev_strength
        rows.append(x / np.linalg.norm(x))
        records.append(
            ExampleRecord(id=f"{prefix}-{i}", lang="xx", role="target", subject=str(y))
        )
    return records, np.array(rows, dtype=np.float32)


@pytest.fixture
def two_phase_job(tmp_path):
    """Old phase keyed to axis 0; new phase keyed to axis 2 with a weak
    reversed signal on axis 0. Returns the trainer spec paths."""
    def build(seed: int, anchors_n: int = 12):
        rng = np.random.default_rng(seed)
        old_recs, old_x = make_phase(120, 8, 0, None, 1.0, 0.0, 0.35, rng, "old")
        new_recs, new_x = make_phase(120, 8, 2, 0, 1.0, 0.35, 0.35, rng, "new")
        dataio.write_records(old_recs, tmp_path / "old.jsonl")
        dataio.write_embeddings(EmbeddingMatrix(old_x), tmp_path / "old.bin")
        dataio.write_records(new_recs, tmp_path / "new.jsonl")
        dataio.write_embeddings(EmbeddingMatrix(new_x), tmp_path / "new.bin")
        recipe = TrainingRecipe(
            manifest_path="manifest.json",
            anchor_ids=tuple(r.id for r in old_recs[:anchors_n]),
            lam=2.0,
            beta=0.1,
        )
        dataio.persist_artifact(recipe, tmp_path / "recipe.json")
        from mlbridge import ToyTrainerSpec

        return ToyTrainerSpec(
            recipe_path=str(tmp_path / "recipe.json"),
            old_records=str(tmp_path / "old.jsonl"),
            old_embeddings=str(tmp_path / "old.bin"),
            new_records=str(tmp_path / "new.jsonl"),
            new_embeddings=str(tmp_path / "new.bin"),
            seed=seed,
        )

    return build
