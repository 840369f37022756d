"""Budget-constrained auxiliary selection.

Quotas are allocated to clusters by stochastic rounding of
``w_norm * B * |target|``, preserving the budget in expectation. Within a
cluster, candidates are drawn categorically from a blended score that
starts prototypical (inverse centroid distance) and shifts quadratically
toward boundary affinity as the quota fills; picking an example demotes
its near-duplicates (cosine similarity above ``tau_sim``) by a fixed
penalty, and with replacement enabled each repeat pick halves an
example's weight, capped at three selections.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import stable_rng, unit_rows
from .core import Assignment, CompassError, Dataset
from .mismatch import MismatchProfile

WEIGHT_FLOOR = 1e-6
MAX_PICKS_PER_EXAMPLE = 3


class SamplingError(CompassError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    budget: float = 0.8
    tau_sim: float = 0.90
    delta: float = 0.20
    seed: int = 0
    replacement_mode: bool = False

    def __post_init__(self) -> None:
        if self.budget <= 0:
            raise SamplingError("budget must be positive")
        if not (0.0 < self.tau_sim < 1.0):
            raise SamplingError("tau_sim must lie in (0, 1)")
        if self.delta < 0:
            raise SamplingError("delta must be non-negative")


@dataclass(frozen=True)
class Selection:
    example_id: str
    cluster: int
    alpha_at_pick: float
    score_at_pick: float
    pick_count: int


@dataclass(frozen=True)
class SamplingPlan:
    KIND = "sampling_plan"

    budget: float
    target_size: int
    seed: int
    tau_sim: float
    delta: float
    quotas: tuple[int, ...]
    selections: tuple[Selection, ...]
    replacement_mode: bool
    underfilled: bool
    shortfall: tuple[int, ...]

    def selected_ids(self) -> list[str]:
        return [s.example_id for s in self.selections]

    def to_payload(self) -> dict:
        return {
            "budget": self.budget,
            "target_size": self.target_size,
            "seed": self.seed,
            "tau_sim": self.tau_sim,
            "delta": self.delta,
            "quotas": list(self.quotas),
            "selections": [
                {
                    "id": s.example_id,
                    "cluster": s.cluster,
                    "alpha_at_pick": s.alpha_at_pick,
                    "score_at_pick": s.score_at_pick,
                    "pick_count": s.pick_count,
                }
                for s in self.selections
            ],
            "replacement_mode": self.replacement_mode,
            "underfilled": self.underfilled,
            "shortfall": list(self.shortfall),
        }

    @classmethod
    def from_payload(cls, doc: dict) -> "SamplingPlan":
        return cls(
            budget=float(doc["budget"]),
            target_size=int(doc["target_size"]),
            seed=int(doc["seed"]),
            tau_sim=float(doc["tau_sim"]),
            delta=float(doc["delta"]),
            quotas=tuple(int(v) for v in doc["quotas"]),
            selections=tuple(
                Selection(
                    example_id=str(s["id"]),
                    cluster=int(s["cluster"]),
                    alpha_at_pick=float(s["alpha_at_pick"]),
                    score_at_pick=float(s["score_at_pick"]),
                    pick_count=int(s["pick_count"]),
                )
                for s in doc["selections"]
            ),
            replacement_mode=bool(doc["replacement_mode"]),
            underfilled=bool(doc["underfilled"]),
            shortfall=tuple(int(v) for v in doc["shortfall"]),
        )


def compute_quotas(
    w_norm, budget: float, target_size: int, rng: np.random.Generator
) -> np.ndarray:
    """Stochastic rounding of the per-cluster raw quota
    ``w_norm * budget * target_size``: floor plus a Bernoulli on the
    fractional part, so the expected total equals ``budget * target_size``."""
    w = np.asarray(w_norm, dtype=np.float64)
    if np.all(w == 0.0):
        return np.zeros(w.size, dtype=np.int64)
    raw = w * budget * target_size
    base = np.floor(raw)
    frac = raw - base
    bumps = rng.random(w.size) < frac
    return (base + bumps).astype(np.int64)


def _score_parts(vectors: np.ndarray, model, k: int):
    """Static per-candidate score components for cluster ``k``.

    The prototypical score is 1/(1 + cosine distance to the own centroid).
    The boundary score rescales the margin to the nearest other centroid so
    that candidates closest to a decision boundary score 1 and the most
    interior candidate scores 0; with a single cluster or a degenerate
    margin spread it is 0.5 everywhere.
    """
    centroids = model.centroids
    dist_own = 1.0 - vectors @ centroids[k]
    s_proto = 1.0 / (1.0 + np.clip(dist_own, 0.0, None))
    if model.k < 2:
        s_boundary = np.full(vectors.shape[0], 0.5)
        margin = np.zeros(vectors.shape[0])
    else:
        dists = 1.0 - vectors @ centroids.T
        dists[:, k] = np.inf
        margin = dists.min(axis=1) - dist_own
        span = margin.max() - margin.min()
        if span <= 0.0:
            s_boundary = np.full(vectors.shape[0], 0.5)
        else:
            s_boundary = (margin.max() - margin) / span
    return s_proto, s_boundary, margin


def instance_scores(ds: Dataset, candidates, asn: Assignment, k: int, alpha: float) -> np.ndarray:
    """Blended score for aux candidates of cluster ``k`` at curriculum
    position ``alpha`` in [0, 1]."""
    idx = np.asarray(list(candidates), dtype=np.int64)
    if np.any(asn.labels[idx] != k):
        raise SamplingError(f"candidates include examples not assigned to cluster {k}")
    if not (0.0 <= alpha <= 1.0):
        raise SamplingError("alpha must lie in [0, 1]")
    vectors = unit_rows(ds.embeddings.data[idx])
    s_proto, s_boundary, _ = _score_parts(vectors, asn.source_model, k)
    return (1.0 - alpha**2) * s_proto + alpha**2 * s_boundary


def run_sampling(
    ds: Dataset, asn: Assignment, profile: MismatchProfile, cfg: SamplerConfig | None = None
) -> SamplingPlan:
    cfg = cfg or SamplerConfig()
    model = asn.source_model
    if profile.k != model.k:
        raise SamplingError(
            f"profile covers {profile.k} clusters, model has {model.k}"
        )
    if len(asn) != len(ds):
        raise SamplingError("assignment does not cover the dataset")

    target_size = int(ds.indices_for_role("target").size)
    rng_quota = stable_rng(cfg.seed, "quotas")
    quotas = compute_quotas(profile.w_norm, cfg.budget, target_size, rng_quota)
    total_quota = int(quotas.sum())

    aux_mask = np.array([r.role == "aux" for r in ds.records])
    labels = asn.labels
    selections: list[Selection] = []
    shortfall = np.zeros(model.k, dtype=np.int64)
    picked_total = 0

    for k in range(model.k):
        quota = int(quotas[k])
        if quota == 0 or picked_total >= total_quota:
            shortfall[k] = quota if picked_total >= total_quota else 0
            continue
        cand_idx = np.nonzero(aux_mask & (labels == k))[0]
        m = cand_idx.size
        if m == 0:
            shortfall[k] = quota
            continue
        vectors = unit_rows(ds.embeddings.data[cand_idx])
        s_proto, s_boundary, _ = _score_parts(vectors, model, k)
        neighbor = (vectors @ vectors.T) > cfg.tau_sim
        np.fill_diagonal(neighbor, False)

        penalties = np.zeros(m)
        picks = np.zeros(m, dtype=np.int64)
        rng = stable_rng(cfg.seed, "cluster", k)
        sampled = 0
        while sampled < quota and picked_total < total_quota:
            if cfg.replacement_mode:
                available = np.nonzero(picks < MAX_PICKS_PER_EXAMPLE)[0]
            else:
                available = np.nonzero(picks == 0)[0]
            if available.size == 0:
                break
            alpha = min(1.0, sampled / quota)
            scores = (1.0 - alpha**2) * s_proto + alpha**2 * s_boundary - cfg.delta * penalties
            weights = np.maximum(scores, WEIGHT_FLOOR) * np.power(0.5, picks)
            w_avail = weights[available]
            choice = int(rng.choice(available.size, p=w_avail / w_avail.sum()))
            i = int(available[choice])
            first_pick = picks[i] == 0
            picks[i] += 1
            selections.append(
                Selection(
                    example_id=ds.records[cand_idx[i]].id,
                    cluster=k,
                    alpha_at_pick=float(alpha),
                    score_at_pick=float(scores[i]),
                    pick_count=int(picks[i]),
                )
            )
            if first_pick:
                penalties[neighbor[i]] += 1.0
            sampled += 1
            picked_total += 1
        shortfall[k] = quota - sampled

    underfilled = bool(np.any(shortfall > 0))
    return SamplingPlan(
        budget=cfg.budget,
        target_size=target_size,
        seed=cfg.seed,
        tau_sim=cfg.tau_sim,
        delta=cfg.delta,
        quotas=tuple(int(q) for q in quotas),
        selections=tuple(selections),
        replacement_mode=cfg.replacement_mode,
        underfilled=underfilled,
        shortfall=tuple(int(s) for s in shortfall),
    )


def build_manifest(plan: SamplingPlan, ds: Dataset) -> dict:
    """Trainer-ready listing of the full selected training set."""
    target_ids = [ds.records[i].id for i in ds.indices_for_role("target")]
    return {
        "kind": "manifest",
        "schema_version": 1,
        "target_ids": target_ids,
        "selected_ids": plan.selected_ids(),
    }
