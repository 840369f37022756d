"""Text embedding into the pipeline's binary wire format.

The embedding model is pluggable behind an opaque identifier. The built-in
``hash-v1`` backend is a deterministic character-trigram feature hasher:
no weights, no downloads, stable across processes, unit-normalized output.
Real sentence encoders register through :func:`register_backend`.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from compass import dataio
from compass.core import CompassError, EmbeddingMatrix


class EmbedError(CompassError):
    pass


class ModelLoadError(EmbedError):
    pass


@dataclass(frozen=True)
class EmbedJobSpec:
    records_path: str
    model_id: str
    batch_size: int
    output_path: str

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise EmbedError("batch_size must be positive")


Encoder = Callable[[list[str]], np.ndarray]

_BACKENDS: dict[str, Callable[[str], Encoder]] = {}


def register_backend(prefix: str, factory: Callable[[str], Encoder]) -> None:
    _BACKENDS[prefix] = factory


def _hash_encoder(model_id: str) -> Encoder:
    dim = 256
    if ":" in model_id:
        dim = int(model_id.split(":", 1)[1])
    if dim < 2:
        raise ModelLoadError(f"hash backend needs dim >= 2, got {dim}")

    def encode(texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), dim), dtype=np.float64)
        for row, text in enumerate(texts):
            padded = f"  {text.lower()} "
            for i in range(len(padded) - 2):
                gram = padded[i : i + 3].encode("utf-8")
                digest = hashlib.sha256(gram).digest()
                bucket = int.from_bytes(digest[:4], "little") % dim
                sign = 1.0 if digest[4] & 1 else -1.0
                out[row, bucket] += sign
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return out / norms

    return encode


register_backend("hash-v1", _hash_encoder)


def load_encoder(model_id: str) -> Encoder:
    prefix = model_id.split(":", 1)[0]
    factory = _BACKENDS.get(prefix)
    if factory is None:
        raise ModelLoadError(
            f"no embedding backend registered for model {model_id!r} "
            f"(available: {sorted(_BACKENDS)})"
        )
    return factory(model_id)


def embed_texts(spec: EmbedJobSpec) -> Path:
    """Embed every record's text, order-preserving, into the binary format.

    Records with empty or missing text are skipped; their ids and row
    numbers land in a ``<output>.skipped.json`` flag file so consumers can
    realign. The output always satisfies the wire format's normalization
    contract.
    """
    records = dataio.read_records(spec.records_path)
    encoder = load_encoder(spec.model_id)
    texts: list[str] = []
    kept_rows: list[int] = []
    skipped: list[dict] = []
    for i, rec in enumerate(records):
        if rec.text is None or rec.text.strip() == "":
            skipped.append({"row": i, "id": rec.id, "reason": "empty-text"})
        else:
            texts.append(rec.text)
            kept_rows.append(i)

    chunks = []
    for start in range(0, len(texts), spec.batch_size):
        chunks.append(encoder(texts[start : start + spec.batch_size]))
    data = (np.vstack(chunks) if chunks else encoder([])).astype(np.float32)
    out_path = Path(spec.output_path)
    dataio.write_embeddings(EmbeddingMatrix(data), out_path)
    flag_path = out_path.with_name(out_path.name + ".skipped.json")
    dataio.write_json(
        {"kind": "embed_skip_report", "skipped": skipped, "kept_rows": kept_rows}, flag_path
    )
    return out_path
