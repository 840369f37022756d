"""Continual-phase machinery: reference vs. monitoring cluster
distributions, the divergence trigger, incremental model updates, anchor
buffers, and training-recipe emission.

The monitor keeps a FIFO window of recent cluster labels. Stream items
that a density model rejects (-1) occupy an explicit extra noise bin in
both distributions, so a surge of unassignable traffic registers as a
shift. The reference distribution is frozen between update cycles.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ._util import unit_rows
from .core import Assignment, ClusterModel, CompassError, Dataset
from .clustering.density import assign_to_tree
from .sampler import SamplingPlan


class MonitorError(CompassError):
    pass


@dataclass(frozen=True)
class TriggerEvent:
    index: int
    js: float
    theta: float
    fired: bool = True


@dataclass(frozen=True)
class TriggerResult:
    fired: bool
    js: float | None
    flag: str | None = None


def js_divergence(p, q) -> float:
    """Base-2 Jensen-Shannon divergence; bounded in [0, 1], symmetric,
    zero iff the distributions match. ``0 * log 0`` is taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise MonitorError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if abs(float(vec.sum()) - 1.0) > 1e-9 or np.any(vec < 0):
            raise MonitorError(f"{name} is not a probability distribution")
    m = 0.5 * (p + q)

    def kl(a: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def build_reference(n_eval, n_selected) -> np.ndarray:
    """Reference cluster distribution of the most recent training cycle:
    eval-proxy counts plus selected-auxiliary counts, normalized."""
    e = np.asarray(n_eval, dtype=np.float64)
    s = np.asarray(n_selected, dtype=np.float64)
    if e.shape != s.shape:
        raise MonitorError("count vectors must align")
    if np.any(e < 0) or np.any(s < 0):
        raise MonitorError("counts must be non-negative")
    total = float((e + s).sum())
    if total == 0.0:
        raise MonitorError("all counts are zero")
    return (e + s) / total


class MonitorState:
    """Single-writer stream monitor; readers should snapshot via
    :meth:`to_payload`."""

    KIND = "monitor_state"

    def __init__(
        self,
        p_ref,
        n_clusters: int,
        window_size: int = 1000,
        theta_js: float = 0.15,
        eta: float = 0.1,
    ):
        ref = np.asarray(p_ref, dtype=np.float64)
        if ref.size == n_clusters:
            ref = np.concatenate([ref, [0.0]])  # explicit noise bin
        if ref.size != n_clusters + 1:
            raise MonitorError(f"p_ref must cover {n_clusters} clusters (+ noise bin)")
        if abs(float(ref.sum()) - 1.0) > 1e-9:
            raise MonitorError("p_ref must sum to 1")
        if not (0.0 < theta_js < 1.0):
            raise MonitorError("theta_js must lie in (0, 1)")
        if window_size < 1:
            raise MonitorError("window_size must be positive")
        self.p_ref = ref
        self.n_clusters = int(n_clusters)
        self.window: deque[tuple[str, int]] = deque(maxlen=window_size)
        self.window_size = int(window_size)
        self.theta_js = float(theta_js)
        self.eta = float(eta)
        self.js_history: list[tuple[int, float]] = []
        self.triggers: list[TriggerEvent] = []
        self.observed = 0

    # -- stream ingestion ---------------------------------------------------

    def p_mon(self) -> np.ndarray:
        counts = np.zeros(self.n_clusters + 1, dtype=np.float64)
        for _id, label in self.window:
            counts[self.n_clusters if label < 0 else label] += 1
        total = counts.sum()
        return counts / total if total > 0 else counts

    def observe(self, example_id: str, label: int) -> np.ndarray:
        if label < -1 or label >= self.n_clusters:
            raise MonitorError(f"label {label} invalid for {self.n_clusters} clusters")
        self.window.append((example_id, int(label)))
        self.observed += 1
        return self.p_mon()

    def check_trigger(self, p_mon: np.ndarray | None = None) -> TriggerResult:
        """Strict exceedance test; never mutates the reference."""
        if len(self.window) == 0:
            return TriggerResult(fired=False, js=None, flag="window-empty")
        if p_mon is None:
            p_mon = self.p_mon()
        js = js_divergence(self.p_ref, p_mon)
        self.js_history.append((self.observed, js))
        fired = js > self.theta_js
        if fired:
            self.triggers.append(TriggerEvent(index=self.observed, js=js, theta=self.theta_js))
        return TriggerResult(fired=fired, js=js)

    def complete_update_cycle(self, p_ref_new=None) -> None:
        """Install the post-retraining reference; defaults to the window's
        empirical distribution (the re-selection proxy)."""
        ref = self.p_mon() if p_ref_new is None else np.asarray(p_ref_new, dtype=np.float64)
        if ref.size == self.n_clusters:
            ref = np.concatenate([ref, [0.0]])
        if ref.size != self.n_clusters + 1 or abs(float(ref.sum()) - 1.0) > 1e-9:
            raise MonitorError("replacement reference is malformed")
        self.p_ref = ref

    # -- persistence ----------------------------------------------------------

    def to_payload(self) -> dict:
        return {
            "p_ref": [float(v) for v in self.p_ref],
            "n_clusters": self.n_clusters,
            "window": [[str(i), int(l)] for i, l in self.window],
            "window_size": self.window_size,
            "theta_js": self.theta_js,
            "eta": self.eta,
            "js_history": [[int(i), float(v)] for i, v in self.js_history],
            "triggers": [
                {"index": t.index, "js": t.js, "theta": t.theta, "fired": t.fired}
                for t in self.triggers
            ],
            "observed": self.observed,
        }

    @classmethod
    def from_payload(cls, doc: dict) -> "MonitorState":
        state = cls(
            p_ref=np.asarray(doc["p_ref"], dtype=np.float64),
            n_clusters=int(doc["n_clusters"]),
            window_size=int(doc["window_size"]),
            theta_js=float(doc["theta_js"]),
            eta=float(doc["eta"]),
        )
        for item_id, label in doc["window"]:
            state.window.append((str(item_id), int(label)))
        state.js_history = [(int(i), float(v)) for i, v in doc["js_history"]]
        state.triggers = [
            TriggerEvent(
                index=int(t["index"]), js=float(t["js"]), theta=float(t["theta"]),
                fired=bool(t["fired"]),
            )
            for t in doc["triggers"]
        ]
        state.observed = int(doc["observed"])
        return state


def observe(state: MonitorState, example_id: str, label: int) -> np.ndarray:
    return state.observe(example_id, label)


def check_trigger(state: MonitorState, p_mon: np.ndarray | None = None) -> TriggerResult:
    return state.check_trigger(p_mon)


# ---------------------------------------------------------------------------
# incremental model updates


def incremental_kmeans_update(
    model: ClusterModel, X_new, labels_new, eta: float
) -> ClusterModel:
    """Blend each touched centroid toward the mean of its new points, then
    renormalize; clusters with no new points are unchanged."""
    if model.method not in ("kmeans", "agglomerative"):
        raise MonitorError("incremental centroid updates need a centroid-backed model")
    if not (0.0 <= eta <= 1.0):
        raise MonitorError("eta must lie in [0, 1]")
    data = unit_rows(np.asarray(X_new, dtype=np.float64))
    labels = np.asarray(labels_new, dtype=np.int64)
    if data.shape[0] != labels.size:
        raise MonitorError("points and labels must align")
    centroids = model.centroids.copy()
    for k in range(model.k):
        members = labels == k
        if not np.any(members):
            continue
        blended = (1.0 - eta) * centroids[k] + eta * data[members].mean(axis=0)
        if np.linalg.norm(blended) == 0.0:
            continue
        centroids[k] = unit_rows(blended)
    return ClusterModel(
        method=model.method, k=model.k, centroids=centroids, params=dict(model.params)
    )


def incremental_density_assign(model: ClusterModel, X_new) -> Assignment:
    """Place stream points into the frozen condensed tree; the tree itself
    is never modified."""
    if model.method != "density" or model.hierarchy is None:
        raise MonitorError("model lacks a retained condensed hierarchy")
    data = X_new.data if hasattr(X_new, "data") else np.asarray(X_new)
    labels = assign_to_tree(model, unit_rows(data))
    return Assignment(labels=labels, source_model=model)


# ---------------------------------------------------------------------------
# anchors and recipes


@dataclass(frozen=True)
class Anchor:
    example_id: str
    cluster: int
    distance: float


@dataclass(frozen=True)
class AnchorBuffer:
    KIND = "anchor_buffer"

    fraction: float
    anchors: tuple[Anchor, ...]

    def ids(self) -> list[str]:
        return [a.example_id for a in self.anchors]

    def to_payload(self) -> dict:
        return {
            "fraction": self.fraction,
            "anchors": [
                {"id": a.example_id, "cluster": a.cluster, "distance": a.distance}
                for a in self.anchors
            ],
        }

    @classmethod
    def from_payload(cls, doc: dict) -> "AnchorBuffer":
        return cls(
            fraction=float(doc["fraction"]),
            anchors=tuple(
                Anchor(str(a["id"]), int(a["cluster"]), float(a["distance"]))
                for a in doc["anchors"]
            ),
        )


def largest_remainder_allocation(masses, total: int, capacities) -> np.ndarray:
    """Proportional integer allocation: floors first, then leftover seats
    by descending fractional remainder (ties to the lower index), capped by
    per-cluster capacity with spill-over."""
    masses = np.asarray(masses, dtype=np.float64)
    caps = np.asarray(capacities, dtype=np.int64)
    total = min(int(total), int(caps.sum()))
    if total <= 0 or masses.sum() == 0:
        return np.zeros(masses.size, dtype=np.int64)
    alloc = np.zeros(masses.size, dtype=np.int64)
    remaining = total
    active = masses > 0
    while remaining > 0:
        share = masses * active
        quota = share / share.sum() * remaining
        base = np.minimum(np.floor(quota).astype(np.int64), caps - alloc)
        alloc += base
        remaining = total - int(alloc.sum())
        if remaining == 0:
            break
        frac = quota - np.floor(quota)
        frac[(caps - alloc) <= 0] = -1.0
        order = np.lexsort((np.arange(masses.size), -frac))
        gave = False
        for idx in order:
            if remaining == 0:
                break
            if alloc[idx] < caps[idx] and frac[idx] >= 0:
                alloc[idx] += 1
                remaining -= 1
                gave = True
        if not gave:
            active = (caps - alloc) > 0
            if not np.any(active):
                break
    return alloc


def select_anchors(
    ds: Dataset, asn: Assignment, model: ClusterModel, fraction: float = 0.05
) -> AnchorBuffer:
    """Keep ``round(fraction * N)`` prototypes: allocation across clusters
    is proportional to cluster mass, and within a cluster the members
    nearest the centroid win (ties by id). Noise is never selected."""
    if not (0.0 <= fraction <= 1.0):
        raise MonitorError("fraction must lie in [0, 1]")
    n = len(ds)
    total = int(math.floor(fraction * n + 0.5))
    labels = asn.labels
    data = unit_rows(ds.embeddings.data)
    masses = np.array([(labels == k).sum() for k in range(model.k)], dtype=np.float64)
    alloc = largest_remainder_allocation(masses, total, masses.astype(np.int64))
    anchors: list[Anchor] = []
    for k in range(model.k):
        take = int(alloc[k])
        if take == 0:
            continue
        members = np.nonzero(labels == k)[0]
        dists = 1.0 - data[members] @ model.centroids[k]
        order = sorted(range(members.size), key=lambda i: (dists[i], ds.records[members[i]].id))
        for i in order[:take]:
            anchors.append(
                Anchor(
                    example_id=ds.records[members[i]].id,
                    cluster=k,
                    distance=float(dists[i]),
                )
            )
    return AnchorBuffer(fraction=float(fraction), anchors=tuple(anchors))


@dataclass(frozen=True)
class TrainingRecipe:
    KIND = "training_recipe"

    manifest_path: str
    anchor_ids: tuple[str, ...]
    lam: float
    beta: float
    loss_tag: str = "ECDA-v1"
    epochs: int = 5

    def __post_init__(self) -> None:
        if self.lam < 0 or self.beta < 0:
            raise MonitorError("lambda and beta must be non-negative")
        if self.epochs < 1:
            raise MonitorError("epochs must be positive")

    def to_payload(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "anchor_ids": list(self.anchor_ids),
            "lambda": self.lam,
            "beta": self.beta,
            "loss_tag": self.loss_tag,
            "epochs": self.epochs,
        }

    @classmethod
    def from_payload(cls, doc: dict) -> "TrainingRecipe":
        return cls(
            manifest_path=str(doc["manifest_path"]),
            anchor_ids=tuple(str(v) for v in doc["anchor_ids"]),
            lam=float(doc["lambda"]),
            beta=float(doc["beta"]),
            loss_tag=str(doc["loss_tag"]),
            epochs=int(doc["epochs"]),
        )


def emit_recipe(
    plan: SamplingPlan,
    anchors: AnchorBuffer,
    lam: float = 2.0,
    beta: float = 0.1,
    *,
    manifest_path: str,
    training_ids,
    epochs: int = 5,
) -> TrainingRecipe:
    """Package the downstream update job: the manifest to train on, the
    rehearsal anchors, and the consolidation strengths. The composite loss
    itself (task + beta * anchor replay + quadratic parameter penalty) is
    executed by the trainer, not here."""
    known = set(training_ids)
    missing = [a for a in anchors.ids() if a not in known]
    if missing:
        raise MonitorError(f"anchor ids not in the previous training set: {missing[:5]}")
    return TrainingRecipe(
        manifest_path=str(manifest_path),
        anchor_ids=tuple(anchors.ids()),
        lam=float(lam),
        beta=float(beta),
        epochs=int(epochs),
    )
