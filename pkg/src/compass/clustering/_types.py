"""Shared clustering types and errors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from ..core import CompassError


class ClusteringError(CompassError):
    pass


class DegenerateInputError(ClusteringError):
    pass


class QualityUndefinedError(ClusteringError):
    """The requested validity index is undefined for this labeling."""


class CoverageError(ClusteringError):
    """Sphere-exclusion could not reach the required assigned fraction."""

    def __init__(self, required: float, best_fraction: float, best_threshold: float):
        super().__init__(
            f"coverage {required:.2f} unachievable; best assigned fraction "
            f"{best_fraction:.4f} at threshold {best_threshold:.4f}"
        )
        self.required = required
        self.best_fraction = best_fraction
        self.best_threshold = best_threshold


@dataclass(frozen=True)
class QualityReport:
    """Internal-validation numbers for one hyperparameter setting.

    Selection is driven by silhouette for the centroid methods and butina,
    and by DBCV for the density method; the non-driving field stays None.
    """

    method: str
    params: Mapping[str, float]
    silhouette: float | None
    dbcv: float | None
    n_clusters: int
    noise_fraction: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", dict(self.params))


def normalize_k_range(k_range, default: tuple[int, int, int]) -> list[int]:
    """Accept {'min','max','step'} mappings or (min, max, step) tuples."""
    if k_range is None:
        lo, hi, step = default
    elif isinstance(k_range, Mapping):
        lo = int(k_range.get("min", default[0]))
        hi = int(k_range.get("max", default[1]))
        step = int(k_range.get("step", default[2]))
    else:
        lo, hi, step = (int(v) for v in k_range)
    if step < 1 or hi < lo or lo < 1:
        raise ClusteringError(f"invalid K range ({lo}, {hi}, {step})")
    return list(range(lo, hi + 1, step))
