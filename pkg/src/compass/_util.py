"""Small numeric helpers shared across modules."""
from __future__ import annotations

import hashlib

import numpy as np


def unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    norms = np.where(norms == 0.0, 1.0, norms)
    return x / norms


def cosine_distances(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Pairwise 1 - dot on unit rows, clipped into [0, 2]."""
    x = np.asarray(x, dtype=np.float64)
    y = x if y is None else np.asarray(y, dtype=np.float64)
    d = 1.0 - x @ y.T
    return np.clip(d, 0.0, 2.0)


def euclidean_distances(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Pairwise Euclidean distances; on unit rows this equals
    sqrt(2 * cosine distance) and is monotone in it."""
    x = np.asarray(x, dtype=np.float64)
    y = x if y is None else np.asarray(y, dtype=np.float64)
    sq = np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :] - 2.0 * (x @ y.T)
    return np.sqrt(np.clip(sq, 0.0, None))


def _token_to_int(token: object) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & 0xFFFFFFFF
    digest = hashlib.sha256(str(token).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def stable_rng(seed: int, *tokens: object) -> np.random.Generator:
    """A generator keyed on (seed, *tokens) that is stable across processes.

    String tokens are digested so stream separation does not depend on
    Python's per-process hash salt.
    """
    key = [int(seed) & 0xFFFFFFFF] + [_token_to_int(t) for t in tokens]
    return np.random.default_rng(key)
