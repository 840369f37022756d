"""compass: distribution-guided auxiliary data selection with continual
drift monitoring.

The pipeline: embed a corpus, cluster the pooled embeddings, measure the
per-cluster gap between the training and usage distributions, sample a
budget-constrained auxiliary subset that closes the gap, then watch the
incoming stream for divergence and emit retraining recipes when it drifts.
"""
from __future__ import annotations

from .core import (
    AdapterRegistry,
    Assignment,
    ClusterModel,
    CompassError,
    Dataset,
    EmbeddingMatrix,
    ExampleRecord,
    Violation,
    resolve_adapter,
    validate_dataset,
)
from .clustering import (
    QualityReport,
    assign,
    cluster_quality,
    fit_agglomerative,
    fit_density,
    fit_kmeans,
    fit_taylor_butina,
)
from .mismatch import ClusterCounts, MismatchProfile, coldstart_proxy, mismatch_profile, tabulate_counts
from .monitor import (
    AnchorBuffer,
    MonitorState,
    TrainingRecipe,
    build_reference,
    check_trigger,
    emit_recipe,
    incremental_density_assign,
    incremental_kmeans_update,
    js_divergence,
    observe,
    select_anchors,
)
from .sampler import SamplerConfig, SamplingPlan, build_manifest, compute_quotas, instance_scores, run_sampling
from .simgen import BlobSpec, DriftScript, DriftStream, bias_simulate, gen_blobs, gen_drift_stream

__version__ = "0.1.0"

__all__ = [
    "AdapterRegistry",
    "AnchorBuffer",
    "Assignment",
    "BlobSpec",
    "ClusterCounts",
    "ClusterModel",
    "CompassError",
    "Dataset",
    "DriftScript",
    "DriftStream",
    "EmbeddingMatrix",
    "ExampleRecord",
    "MismatchProfile",
    "MonitorState",
    "QualityReport",
    "SamplerConfig",
    "SamplingPlan",
    "TrainingRecipe",
    "Violation",
    "assign",
    "bias_simulate",
    "build_manifest",
    "build_reference",
    "check_trigger",
    "cluster_quality",
    "coldstart_proxy",
    "compute_quotas",
    "emit_recipe",
    "fit_agglomerative",
    "fit_density",
    "fit_kmeans",
    "fit_taylor_butina",
    "gen_blobs",
    "gen_drift_stream",
    "incremental_density_assign",
    "incremental_kmeans_update",
    "instance_scores",
    "js_divergence",
    "mismatch_profile",
    "observe",
    "resolve_adapter",
    "run_sampling",
    "select_anchors",
    "tabulate_counts",
    "validate_dataset",
]
