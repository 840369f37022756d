"""Bit-exact persistence for embeddings, records, and pipeline artifacts.

Embeddings use a 16-byte binary header followed by little-endian float32
rows; everything else is canonical JSON (sorted keys, two-space indent,
shortest round-trip float formatting) so that identical artifacts always
produce byte-identical files. These formats are the wire contract between
pipeline stages and external consumers.
"""
from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from base64 import b64decode, b64encode
from pathlib import Path
from typing import IO, Any, BinaryIO

import numpy as np

from .core import CompassError, EmbeddingMatrix, ExampleRecord, ROLES, NORM_TOL

MAGIC = b"CMPS"
FORMAT_VERSION = 1
# magic(4) + version u32 + dim u32 + count u32, all little-endian
_HEADER = struct.Struct("<4sIII")
HEADER_SIZE = _HEADER.size
SCHEMA_VERSION = 1


class PersistenceError(CompassError):
    """Base class for file-format failures."""


class BadMagicError(PersistenceError):
    pass


class UnsupportedVersionError(PersistenceError):
    pass


class TruncatedFileError(PersistenceError):
    pass


class NotNormalizedError(PersistenceError):
    pass


class RecordParseError(PersistenceError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class KindMismatchError(PersistenceError):
    pass


# ---------------------------------------------------------------------------
# low-level sinks


def _open_sink(sink: str | Path | BinaryIO, mode: str):
    if isinstance(sink, (str, Path)):
        return open(sink, mode), True
    return sink, False


def atomic_write_bytes(path: str | Path, payload: bytes) -> int:
    """Write a file atomically: temp file in the same directory, fsync,
    rename over the target. Concurrent writers serialize on the rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(payload)


# ---------------------------------------------------------------------------
# binary embedding format


def write_embeddings(matrix: EmbeddingMatrix, sink: str | Path | BinaryIO) -> int:
    """Serialize a unit-row matrix; returns the byte count
    (16 + 4 * dim * count)."""
    if matrix.dim < 1:
        raise PersistenceError("embedding dimension must be positive")
    norms = matrix.row_norms()
    bad = np.nonzero(np.abs(norms - 1.0) > NORM_TOL)[0]
    if bad.size:
        raise NotNormalizedError(f"rows {bad[:8].tolist()} are not unit-normalized")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, matrix.dim, matrix.count)
    body = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    if isinstance(sink, (str, Path)):
        return atomic_write_bytes(sink, header + body)
    sink.write(header)
    sink.write(body)
    return HEADER_SIZE + len(body)


def read_embeddings(source: str | Path | BinaryIO) -> EmbeddingMatrix:
    """Read and validate; round-trips bit-exactly with
    :func:`write_embeddings`."""
    fh, close = _open_sink(source, "rb")
    try:
        raw = fh.read()
    finally:
        if close:
            fh.close()
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"file is {len(raw)} bytes; header needs {HEADER_SIZE}")
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    if dim < 1:
        raise PersistenceError("stored dimension must be positive")
    expected = HEADER_SIZE + 4 * dim * count
    if len(raw) < expected:
        raise TruncatedFileError(f"expected {expected} bytes, file has {len(raw)}")
    if len(raw) > expected:
        raise PersistenceError(f"trailing data: expected {expected} bytes, file has {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(count, dim)
    matrix = EmbeddingMatrix(data.copy())
    norms = matrix.row_norms()
    bad = np.nonzero(np.abs(norms - 1.0) > NORM_TOL)[0]
    if bad.size:
        raise NotNormalizedError(f"rows {bad[:8].tolist()} are not unit-normalized")
    return matrix


# ---------------------------------------------------------------------------
# JSONL records


def write_records(records, sink: str | Path | IO[str]) -> int:
    lines = []
    for rec in records:
        doc: dict[str, Any] = {"id": rec.id, "lang": rec.lang, "role": rec.role}
        if rec.subject is not None:
            doc["subject"] = rec.subject
        if rec.text is not None:
            doc["text"] = rec.text
        lines.append(json.dumps(doc, sort_keys=True, ensure_ascii=False))
    payload = "".join(line + "\n" for line in lines)
    if isinstance(sink, (str, Path)):
        return atomic_write_bytes(sink, payload.encode("utf-8"))
    sink.write(payload)
    return len(payload)


def read_records(source: str | Path | IO[str]) -> list[ExampleRecord]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    records: list[ExampleRecord] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordParseError(line_no, f"malformed JSON ({exc.msg})") from exc
        if not isinstance(doc, dict):
            raise RecordParseError(line_no, "expected a JSON object")
        for key in ("id", "lang", "role"):
            if key not in doc:
                raise RecordParseError(line_no, f"missing required key {key!r}")
        if doc["role"] not in ROLES:
            raise RecordParseError(line_no, f"unknown role {doc['role']!r}")
        records.append(
            ExampleRecord(
                id=str(doc["id"]),
                lang=str(doc["lang"]),
                role=str(doc["role"]),
                subject=None if doc.get("subject") is None else str(doc["subject"]),
                text=None if doc.get("text") is None else str(doc["text"]),
            )
        )
    return records


# ---------------------------------------------------------------------------
# canonical JSON artifacts


def canonical_json(doc: Any) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n").encode(
        "utf-8"
    )


def write_json(doc: Any, sink: str | Path | IO[str] | BinaryIO) -> int:
    payload = canonical_json(doc)
    if isinstance(sink, (str, Path)):
        return atomic_write_bytes(sink, payload)
    if isinstance(sink, io.TextIOBase):
        sink.write(payload.decode("utf-8"))
    else:
        sink.write(payload)
    return len(payload)


def read_json(source: str | Path | IO[str] | BinaryIO) -> Any:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return json.load(fh)
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def _artifact_registry() -> dict[str, type]:
    # deferred imports: the artifact classes live with their producing modules
    from .mismatch import MismatchProfile
    from .monitor import AnchorBuffer, MonitorState, TrainingRecipe
    from .sampler import SamplingPlan

    return {
        cls.KIND: cls
        for cls in (SamplingPlan, MismatchProfile, MonitorState, AnchorBuffer, TrainingRecipe)
    }


def persist_artifact(artifact: Any, sink: str | Path | IO[str] | BinaryIO) -> int:
    """Write any pipeline artifact as canonical JSON with its ``kind`` tag."""
    kind = getattr(artifact, "KIND", None)
    if kind is None or kind not in _artifact_registry():
        raise PersistenceError(f"object of type {type(artifact).__name__} is not a known artifact")
    doc = {"kind": kind, "schema_version": SCHEMA_VERSION}
    doc.update(artifact.to_payload())
    return write_json(doc, sink)


def load_artifact(source: str | Path | IO[str] | BinaryIO, expected_kind: str | None = None) -> Any:
    doc = read_json(source)
    if not isinstance(doc, dict) or "kind" not in doc:
        raise PersistenceError("artifact file lacks a 'kind' field")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise PersistenceError(f"unsupported schema_version {doc.get('schema_version')!r}")
    kind = doc["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise KindMismatchError(f"expected kind {expected_kind!r}, file holds {kind!r}")
    registry = _artifact_registry()
    if kind not in registry:
        raise PersistenceError(f"unknown artifact kind {kind!r}")
    return registry[kind].from_payload(doc)


# ---------------------------------------------------------------------------
# cluster models (JSON + embedded binary blocks)


def encode_f64_block(arr: np.ndarray) -> str:
    return b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def decode_f64_block(blob: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(b64decode(blob), dtype="<f8").reshape(shape).copy()


def encode_f32_block(arr: np.ndarray) -> str:
    return b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def decode_f32_block(blob: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(b64decode(blob), dtype="<f4").reshape(shape).copy()


def save_cluster_model(model, sink: str | Path | IO[str] | BinaryIO) -> int:
    from .clustering.density import hierarchy_to_payload

    doc: dict[str, Any] = {
        "kind": "cluster_model",
        "schema_version": SCHEMA_VERSION,
        "method": model.method,
        "k": model.k,
        "dim": model.dim,
        "params": {key: float(val) for key, val in model.params.items()},
        "centroids": encode_f64_block(model.centroids),
    }
    if model.hierarchy is not None:
        doc["hierarchy"] = hierarchy_to_payload(model.hierarchy)
    return write_json(doc, sink)


def load_cluster_model(source: str | Path | IO[str] | BinaryIO):
    from .clustering.density import hierarchy_from_payload
    from .core import ClusterModel

    doc = read_json(source)
    if doc.get("kind") != "cluster_model":
        raise KindMismatchError(f"expected kind 'cluster_model', file holds {doc.get('kind')!r}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise PersistenceError(f"unsupported schema_version {doc.get('schema_version')!r}")
    centroids = decode_f64_block(doc["centroids"], (doc["k"], doc["dim"]))
    hierarchy = hierarchy_from_payload(doc["hierarchy"]) if "hierarchy" in doc else None
    return ClusterModel(
        method=doc["method"],
        k=int(doc["k"]),
        centroids=centroids,
        hierarchy=hierarchy,
        params=doc.get("params", {}),
    )


def save_assignment(assignment, sink: str | Path | IO[str] | BinaryIO) -> int:
    doc = {
        "kind": "assignment",
        "schema_version": SCHEMA_VERSION,
        "labels": [int(v) for v in assignment.labels],
    }
    return write_json(doc, sink)


def load_assignment_labels(source: str | Path | IO[str] | BinaryIO) -> np.ndarray:
    doc = read_json(source)
    if doc.get("kind") != "assignment":
        raise KindMismatchError(f"expected kind 'assignment', file holds {doc.get('kind')!r}")
    return np.asarray(doc["labels"], dtype=np.int64)
