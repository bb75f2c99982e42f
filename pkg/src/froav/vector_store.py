"""Exact top-k cosine retrieval over chunk embeddings.

The store is fixed-dimension and keyed by one embedder model; mixing
embedding spaces is an error. Retrieval is an exact linear scan (no
approximate indexing), so results are reproducible against a brute-force
oracle. Vectors are held and persisted as float32.

On-disk layout (``save``/``load``):
    manifest.json    {"dimension", "embedder_model_id", "count", "vector_encoding"}
    vectors.f32      row-major float32, little-endian, one row per record
    metadata.jsonl   one JSON object per record, same order as vector rows
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyStore

NORM_RTOL = 1e-6


@dataclass
class EmbeddingRecord:
    chunk_id: str
    document_id: str
    vector: list[float]
    norm: float
    embedder_model_id: str
    metadata: dict[str, str] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        chunk_id: str,
        document_id: str,
        vector: list[float],
        embedder_model_id: str,
        metadata: dict[str, str] | None = None,
    ) -> "EmbeddingRecord":
        """Build a record with the norm computed from the float32-cast vector."""
        v32 = np.asarray(vector, dtype=np.float32)
        return cls(
            chunk_id=chunk_id,
            document_id=document_id,
            vector=[float(x) for x in v32],
            norm=float(np.linalg.norm(v32.astype(np.float64))),
            embedder_model_id=embedder_model_id,
            metadata=dict(metadata or {}),
        )


@dataclass
class RetrievalHit:
    chunk_id: str
    score: float
    metadata: dict[str, str]


class VectorStore:
    """In-memory store with synchronized reads/writes and explicit persistence.

    Writes are atomic with respect to searches: a search sees the store
    entirely before or after an upsert batch.
    """

    def __init__(self, dimension: int, embedder_model_id: str):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.embedder_model_id = embedder_model_id
        self._records: dict[str, EmbeddingRecord] = {}
        self._lock = threading.RLock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def get(self, chunk_id: str) -> EmbeddingRecord | None:
        with self._lock:
            return self._records.get(chunk_id)

    def upsert(self, records: list[EmbeddingRecord]) -> int:
        """Insert or replace records by chunk_id; returns the batch size."""
        checked = []
        for rec in records:
            if len(rec.vector) != self.dimension:
                raise DimensionMismatch(
                    f"record {rec.chunk_id!r} has dimension {len(rec.vector)}, "
                    f"store expects {self.dimension}"
                )
            if rec.embedder_model_id != self.embedder_model_id:
                raise DimensionMismatch(
                    f"record {rec.chunk_id!r} was embedded by {rec.embedder_model_id!r}, "
                    f"store holds {self.embedder_model_id!r} vectors"
                )
            v32 = np.asarray(rec.vector, dtype=np.float32)
            actual = float(np.linalg.norm(v32.astype(np.float64)))
            if actual <= 0.0:
                raise ValueError(f"record {rec.chunk_id!r} has zero vector")
            if abs(actual - rec.norm) > NORM_RTOL * max(abs(actual), abs(rec.norm)):
                raise ValueError(
                    f"record {rec.chunk_id!r} stored norm {rec.norm} does not match "
                    f"recomputed norm {actual}"
                )
            checked.append(
                EmbeddingRecord(
                    chunk_id=rec.chunk_id,
                    document_id=rec.document_id,
                    vector=[float(x) for x in v32],
                    norm=actual,
                    embedder_model_id=rec.embedder_model_id,
                    metadata=dict(rec.metadata),
                )
            )
        with self._lock:
            for rec in checked:
                self._records[rec.chunk_id] = rec
        return len(checked)

    def search_top_k(
        self,
        query_vector: list[float],
        k: int,
        metadata_filter: dict[str, str] | None = None,
    ) -> list[RetrievalHit]:
        """Exact cosine top-k: dot(q, v) / (|q| * |v|), ties broken by ascending chunk_id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(query_vector) != self.dimension:
            raise DimensionMismatch(
                f"query has dimension {len(query_vector)}, store expects {self.dimension}"
            )
        q = np.asarray(query_vector, dtype=np.float64)
        qnorm = float(np.linalg.norm(q))
        if qnorm <= 0.0:
            raise ValueError("query vector has zero norm")

        with self._lock:
            candidates = [
                rec
                for rec in self._records.values()
                if _matches(rec.metadata, metadata_filter)
            ]
            if not candidates:
                raise EmptyStore("no records match the search")
            scored = []
            for rec in candidates:
                v = np.asarray(rec.vector, dtype=np.float64)
                score = float(np.dot(q, v) / (qnorm * rec.norm))
                scored.append((score, rec))
        scored.sort(key=lambda pair: (-pair[0], pair[1].chunk_id))
        return [
            RetrievalHit(chunk_id=rec.chunk_id, score=score, metadata=dict(rec.metadata))
            for score, rec in scored[:k]
        ]

    # -- persistence ----------------------------------------------------------

    def save(self, dir_path: str | Path) -> None:
        path = Path(dir_path)
        path.mkdir(parents=True, exist_ok=True)
        with self._lock:
            records = sorted(self._records.values(), key=lambda r: r.chunk_id)
            manifest = {
                "dimension": self.dimension,
                "embedder_model_id": self.embedder_model_id,
                "count": len(records),
                "vector_encoding": "float32 little-endian row-major",
            }
            matrix = (
                np.stack([np.asarray(r.vector, dtype="<f4") for r in records])
                if records
                else np.zeros((0, self.dimension), dtype="<f4")
            )
            (path / "manifest.json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
            )
            (path / "vectors.f32").write_bytes(matrix.astype("<f4").tobytes(order="C"))
            with open(path / "metadata.jsonl", "w", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(
                        json.dumps(
                            {
                                "chunk_id": rec.chunk_id,
                                "document_id": rec.document_id,
                                "norm": rec.norm,
                                "metadata": rec.metadata,
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )

    @classmethod
    def load(cls, dir_path: str | Path) -> "VectorStore":
        path = Path(dir_path)
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        store = cls(manifest["dimension"], manifest["embedder_model_id"])
        raw = (path / "vectors.f32").read_bytes()
        matrix = np.frombuffer(raw, dtype="<f4").reshape(manifest["count"], store.dimension)
        records = []
        with open(path / "metadata.jsonl", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                meta = json.loads(line)
                records.append(
                    EmbeddingRecord(
                        chunk_id=meta["chunk_id"],
                        document_id=meta["document_id"],
                        vector=[float(x) for x in matrix[i]],
                        norm=meta["norm"],
                        embedder_model_id=store.embedder_model_id,
                        metadata=meta["metadata"],
                    )
                )
        if len(records) != manifest["count"]:
            raise ValueError(
                f"metadata row count {len(records)} does not match manifest count "
                f"{manifest['count']}"
            )
        store.upsert(records)
        return store


def _matches(metadata: dict[str, str], metadata_filter: dict[str, str] | None) -> bool:
    if not metadata_filter:
        return True
    return all(metadata.get(k) == v for k, v in metadata_filter.items())


def cosine(u: list[float], v: list[float]) -> float:
    """Plain cosine similarity; raises on zero vectors."""
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    return dot / (nu * nv)
