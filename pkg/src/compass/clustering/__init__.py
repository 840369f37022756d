"""Clustering methods over pooled embeddings, internal validation, and
assignment of new points to fitted models."""
from __future__ import annotations

import numpy as np

from .._util import unit_rows
from ..core import Assignment, ClusterModel
from ._types import (
    ClusteringError,
    CoverageError,
    DegenerateInputError,
    QualityReport,
    QualityUndefinedError,
)
from .agglomerative import fit_agglomerative
from .butina import fit_taylor_butina
from .density import assign_to_tree, fit_density, fitted_labels
from .kmeans import fit_kmeans
from .quality import cluster_quality, dbcv_score, silhouette_score

__all__ = [
    "Assignment",
    "ClusteringError",
    "CoverageError",
    "DegenerateInputError",
    "QualityReport",
    "QualityUndefinedError",
    "assign",
    "cluster_quality",
    "dbcv_score",
    "fit_agglomerative",
    "fit_density",
    "fit_kmeans",
    "fit_taylor_butina",
    "fitted_labels",
    "silhouette_score",
]


def assign(X_new, model: ClusterModel) -> Assignment:
    """Assign new points: nearest centroid for centroid-backed methods
    (ties go to the lowest cluster index), condensed-tree placement for the
    density method."""
    data = X_new.data if hasattr(X_new, "data") else np.asarray(X_new)
    data = unit_rows(data)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[1] != model.dim:
        raise ClusteringError(f"dimension mismatch: {data.shape[1]} vs model dim {model.dim}")
    if model.method == "density":
        labels = assign_to_tree(model, data)
    else:
        sims = data @ model.centroids.T
        labels = np.argmax(sims, axis=1).astype(np.int64)
    return Assignment(labels=labels, source_model=model)
