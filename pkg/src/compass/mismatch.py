"""Distribution-gap statistics: per-cluster role counts, eval/train
ratios, and the smoothed cluster weights that drive quota allocation.

The ratio ``rho`` (eval share over train share) is reported for
diagnostics; sampling itself is driven by the smoothed weight
``w = n_eval / (n_t + epsilon)`` and its normalization ``w_norm``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Assignment, CompassError, Dataset, EmbeddingMatrix, ExampleRecord


class MismatchError(CompassError):
    pass


@dataclass(frozen=True)
class ClusterCounts:
    """Role-split tallies over clusters 0..K-1; noise (-1) is tracked
    separately and never enters the K-indexed table. Stream-role records
    are excluded entirely."""

    n_t: tuple[int, ...]
    n_aux: tuple[int, ...]
    n_eval: tuple[int, ...]
    noise: dict[str, int]

    @property
    def k(self) -> int:
        return len(self.n_t)


@dataclass(frozen=True)
class MismatchProfile:
    KIND = "mismatch_profile"

    n_t: tuple[int, ...]
    n_aux: tuple[int, ...]
    n_eval: tuple[int, ...]
    rho: tuple[float, ...]
    w: tuple[float, ...]
    w_norm: tuple[float, ...]
    epsilon: float
    no_eval_signal: bool

    @property
    def k(self) -> int:
        return len(self.w)

    def to_payload(self) -> dict:
        return {
            "n_t": list(self.n_t),
            "n_aux": list(self.n_aux),
            "n_eval": list(self.n_eval),
            "rho": ["inf" if math.isinf(v) else v for v in self.rho],
            "w": list(self.w),
            "w_norm": list(self.w_norm),
            "epsilon": self.epsilon,
            "no_eval_signal": self.no_eval_signal,
        }

    @classmethod
    def from_payload(cls, doc: dict) -> "MismatchProfile":
        return cls(
            n_t=tuple(int(v) for v in doc["n_t"]),
            n_aux=tuple(int(v) for v in doc["n_aux"]),
            n_eval=tuple(int(v) for v in doc["n_eval"]),
            rho=tuple(math.inf if v == "inf" else float(v) for v in doc["rho"]),
            w=tuple(float(v) for v in doc["w"]),
            w_norm=tuple(float(v) for v in doc["w_norm"]),
            epsilon=float(doc["epsilon"]),
            no_eval_signal=bool(doc["no_eval_signal"]),
        )


def tabulate_counts(ds: Dataset, asn: Assignment) -> ClusterCounts:
    if len(asn) != len(ds):
        raise MismatchError(f"assignment covers {len(asn)} records, dataset has {len(ds)}")
    k = asn.source_model.k
    tallies = {role: np.zeros(k, dtype=np.int64) for role in ("target", "aux", "eval")}
    noise = {"target": 0, "aux": 0, "eval": 0}
    for rec, label in zip(ds.records, asn.labels):
        if rec.role == "stream":
            continue
        if label < 0:
            noise[rec.role] += 1
        else:
            tallies[rec.role][label] += 1
    return ClusterCounts(
        n_t=tuple(int(v) for v in tallies["target"]),
        n_aux=tuple(int(v) for v in tallies["aux"]),
        n_eval=tuple(int(v) for v in tallies["eval"]),
        noise=noise,
    )


def mismatch_profile(counts: ClusterCounts, epsilon: float = 1.0) -> MismatchProfile:
    n_t = np.asarray(counts.n_t, dtype=np.float64)
    n_eval = np.asarray(counts.n_eval, dtype=np.float64)
    if np.any(n_t < 0) or np.any(n_eval < 0) or np.any(np.asarray(counts.n_aux) < 0):
        raise MismatchError("counts must be non-negative")

    total_t = n_t.sum()
    total_eval = n_eval.sum()
    rho = []
    for t_k, e_k in zip(n_t, n_eval):
        if e_k == 0:
            rho.append(0.0)
        elif t_k == 0 or total_t == 0:
            rho.append(math.inf)
        else:
            rho.append(float((e_k / total_eval) / (t_k / total_t)))

    w = np.where(n_eval > 0, n_eval / (n_t + epsilon), 0.0)
    total_w = float(w.sum())
    no_signal = total_w == 0.0
    w_norm = np.zeros_like(w) if no_signal else w / total_w
    return MismatchProfile(
        n_t=counts.n_t,
        n_aux=counts.n_aux,
        n_eval=counts.n_eval,
        rho=tuple(rho),
        w=tuple(float(v) for v in w),
        w_norm=tuple(float(v) for v in w_norm),
        epsilon=float(epsilon),
        no_eval_signal=no_signal,
    )


def coldstart_proxy(ds: Dataset, mode: str, donor_lang: str | None = None) -> Dataset:
    """Synthesize a usage proxy when no eval data exists for the target.

    ``self`` clones the target records as eval proxies (approximately
    uniform weighting downstream); ``borrow`` keeps only the donor
    language's eval records as the proxy distribution.
    """
    if mode == "self":
        target_idx = ds.indices_for_role("target")
        if target_idx.size == 0:
            raise MismatchError("self proxy needs target records")
        clones = [
            ExampleRecord(
                id=f"{ds.records[i].id}:proxy",
                lang=ds.records[i].lang,
                role="eval",
                subject=ds.records[i].subject,
                text=ds.records[i].text,
            )
            for i in target_idx
        ]
        new_rows = np.vstack([ds.embeddings.data, ds.embeddings.data[target_idx]])
        return Dataset(tuple(ds.records) + tuple(clones), EmbeddingMatrix(new_rows))
    if mode == "borrow":
        if donor_lang is None:
            raise MismatchError("borrow mode needs a donor language")
        keep = [
            i
            for i, rec in enumerate(ds.records)
            if rec.role != "eval" or rec.lang == donor_lang
        ]
        donors = [i for i, rec in enumerate(ds.records) if rec.role == "eval" and rec.lang == donor_lang]
        if not donors:
            raise MismatchError(f"no eval records for donor language {donor_lang!r}")
        return ds.subset(keep)
    raise MismatchError(f"unknown cold-start mode {mode!r}")
