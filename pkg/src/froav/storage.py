"""Durable, provenance-preserving entity storage.

An append-only JSONL log per entity kind (plus one for multi-entity
transactions) with per-record CRC32 checksums and an in-memory index of the
latest record per (kind, id). Records are never mutated in place; supersedes
append a new record and the index keeps the highest sequence number.

Data directory layout (rooted at FROAV_DATA_DIR):

    store/
      manifest.json       advisory metadata; replay never trusts it
      document.jsonl      one line per write: {"kind","id","seq","written_at","payload","crc"}
      ...                 one file per entity kind
      txn.jsonl           multi-entity transactions: {"txn":[items...], "crc"}

Replay tolerates a torn trailing record per file (checksum or JSON failure
on the last line) and raises CorruptLog for damage anywhere else.
"""

from __future__ import annotations

import copy
import json
import logging
import os
import threading
import zlib
from pathlib import Path

from jsonschema import Draft202012Validator

from .canonical import canonical_bytes, canonical_json, now_iso
from .dims import DIMENSIONS
from .errors import (
    CorruptLog,
    ReferentialIntegrityError,
    SchemaViolation,
    UnknownKind,
)

logger = logging.getLogger(__name__)

KINDS = (
    "document",
    "chunk",
    "embedding_manifest",
    "workflow",
    "trace",
    "report",
    "verdict",
    "consensus",
    "reviewer",
    "feedback",
    "feedback_archive",
)

TXN_FILE = "txn"

_STR_MAP = {"type": "object", "additionalProperties": {"type": "string"}}
_SCORE = {"type": "integer", "minimum": 1, "maximum": 10}
_DIM = {"enum": list(DIMENSIONS)}

_SCHEMAS: dict[str, dict] = {
    "document": {
        "type": "object",
        "required": ["id", "source_uri", "content", "metadata", "ingested_at"],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "source_uri": {"type": "string"},
            "content": {"type": "string", "minLength": 1},
            "metadata": _STR_MAP,
            "ingested_at": {"type": "string"},
        },
    },
    "chunk": {
        "type": "object",
        "required": ["id", "document_id", "seq", "char_start", "char_end", "text", "metadata"],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "document_id": {"type": "string", "minLength": 1},
            "seq": {"type": "integer", "minimum": 0},
            "char_start": {"type": "integer", "minimum": 0},
            "char_end": {"type": "integer", "minimum": 0},
            "text": {"type": "string"},
            "metadata": _STR_MAP,
        },
    },
    "embedding_manifest": {
        "type": "object",
        "required": ["id", "embedder_model_id", "dimension", "count", "path"],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "embedder_model_id": {"type": "string", "minLength": 1},
            "dimension": {"type": "integer", "minimum": 1},
            "count": {"type": "integer", "minimum": 0},
            "path": {"type": "string"},
        },
    },
    "workflow": {
        "type": "object",
        "required": ["id", "nodes", "edges"],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "nodes": {"type": "array"},
            "edges": {"type": "array"},
        },
    },
    "trace": {
        "type": "object",
        "required": ["run_id", "workflow_id", "started_at", "status", "events"],
        "properties": {
            "run_id": {"type": "string", "minLength": 1},
            "workflow_id": {"type": "string", "minLength": 1},
            "started_at": {"type": "string"},
            "finished_at": {"type": ["string", "null"]},
            "status": {"enum": ["running", "succeeded", "failed"]},
            "events": {"type": "array"},
        },
    },
    "report": {
        "type": "object",
        "required": [
            "id",
            "run_id",
            "query",
            "context_chunk_ids",
            "generator_model_id",
            "text",
            "created_at",
        ],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "run_id": {"type": "string", "minLength": 1},
            "query": {"type": "string"},
            "context_chunk_ids": {
                "type": "array",
                "items": {"type": "string"},
                "minItems": 1,
            },
            "generator_model_id": {"type": "string"},
            "text": {"type": "string", "minLength": 1},
            "created_at": {"type": "string"},
        },
    },
    "verdict": {
        "type": "object",
        "required": [
            "id",
            "report_id",
            "dimension",
            "judge_model_id",
            "status",
            "raw_response",
            "created_at",
        ],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "report_id": {"type": "string", "minLength": 1},
            "dimension": _DIM,
            "judge_model_id": {"type": "string"},
            "status": {"enum": ["ok", "failed"]},
            "score": {"anyOf": [_SCORE, {"type": "null"}]},
            "rationale": {"type": ["string", "null"]},
            "raw_response": {"type": "string"},
            "error": {"type": ["string", "null"]},
            "created_at": {"type": "string"},
        },
        "allOf": [
            {
                "if": {"properties": {"status": {"const": "ok"}}},
                "then": {
                    "required": ["score", "rationale"],
                    "properties": {
                        "score": _SCORE,
                        "rationale": {"type": "string", "minLength": 1},
                    },
                },
            }
        ],
    },
    "consensus": {
        "type": "object",
        "required": ["id", "report_id", "dimension", "score", "method", "verdict_ids", "created_at"],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "report_id": {"type": "string", "minLength": 1},
            "dimension": _DIM,
            "score": {"type": "number", "minimum": 1, "maximum": 10},
            "method": {"const": "median"},
            "verdict_ids": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "created_at": {"type": "string"},
        },
    },
    "reviewer": {
        "type": "object",
        "required": ["id", "display_name", "token_hash", "created_at", "revoked"],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "display_name": {"type": "string", "minLength": 1},
            "token_hash": {"type": "string", "minLength": 16},
            "created_at": {"type": "string"},
            "revoked": {"type": "boolean"},
        },
    },
    "feedback": {
        "type": "object",
        "required": [
            "id",
            "report_id",
            "reviewer_id",
            "dimension",
            "score",
            "comment",
            "created_at",
        ],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "report_id": {"type": "string", "minLength": 1},
            "reviewer_id": {"type": "string", "minLength": 1},
            "dimension": _DIM,
            "score": _SCORE,
            "comment": {"type": "string"},
            "created_at": {"type": "string"},
        },
    },
    "feedback_archive": {
        "type": "object",
        "required": [
            "id",
            "feedback_id",
            "report_id",
            "reviewer_id",
            "dimension",
            "superseded_by",
            "archived_at",
        ],
        "properties": {
            "id": {"type": "string", "minLength": 1},
            "feedback_id": {"type": "string", "minLength": 1},
            "report_id": {"type": "string", "minLength": 1},
            "reviewer_id": {"type": "string", "minLength": 1},
            "dimension": _DIM,
            "superseded_by": {"type": "string", "minLength": 1},
            "archived_at": {"type": "string"},
        },
    },
}

_VALIDATORS = {kind: Draft202012Validator(schema) for kind, schema in _SCHEMAS.items()}

# (payload field, referenced kind, field holds a list of ids)
_REFS: dict[str, list[tuple[str, str, bool]]] = {
    "document": [],
    "chunk": [("document_id", "document", False)],
    "embedding_manifest": [],
    "workflow": [],
    "trace": [("workflow_id", "workflow", False)],
    "report": [("run_id", "trace", False), ("context_chunk_ids", "chunk", True)],
    "verdict": [("report_id", "report", False)],
    "consensus": [("report_id", "report", False), ("verdict_ids", "verdict", True)],
    "reviewer": [],
    "feedback": [("report_id", "report", False), ("reviewer_id", "reviewer", False)],
    "feedback_archive": [
        ("feedback_id", "feedback", False),
        ("superseded_by", "feedback", False),
    ],
}

# field used for created_at-range queries, per kind
_TS_FIELD = {
    "document": "ingested_at",
    "trace": "started_at",
    "feedback_archive": "archived_at",
}


class _Entry:
    __slots__ = ("seq", "written_at", "payload")

    def __init__(self, seq: int, written_at: str, payload: dict):
        self.seq = seq
        self.written_at = written_at
        self.payload = payload


def _crc(record: dict) -> str:
    return format(zlib.crc32(canonical_bytes(record)) & 0xFFFFFFFF, "08x")


class Store:
    """Append-only entity store with write-time schema and reference checks."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir) / "store"
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._files: dict[str, object] = {}
        self._index: dict[str, dict[str, _Entry]] = {kind: {} for kind in KINDS}
        self._seq = 0
        self._replay()
        self._write_manifest()

    # -- public API -----------------------------------------------------------

    def put(self, kind: str, entity_id: str, payload: dict) -> int:
        """Validate, durably append, and index one record; returns its seq."""
        with self._lock:
            self._check(kind, entity_id, payload, pending=())
            seq = self._next_seq()
            written_at = now_iso()
            record = {
                "kind": kind,
                "id": entity_id,
                "seq": seq,
                "written_at": written_at,
                "payload": _canon(payload),
            }
            record["crc"] = _crc(record)
            self._append(kind, record)
            self._index[kind][entity_id] = _Entry(seq, written_at, record["payload"])
            return seq

    def put_many(self, items: list[tuple[str, str, dict]]) -> int:
        """Atomically append a group of records as one transaction.

        References may point at earlier items within the same group. Returns
        the seq of the last item. Readers never observe a partially applied
        group, and a torn transaction record is dropped whole on replay.
        """
        if not items:
            raise ValueError("empty transaction")
        with self._lock:
            pending: list[tuple[str, str]] = []
            for kind, entity_id, payload in items:
                self._check(kind, entity_id, payload, pending=tuple(pending))
                pending.append((kind, entity_id))
            txn = []
            for kind, entity_id, payload in items:
                txn.append(
                    {
                        "kind": kind,
                        "id": entity_id,
                        "seq": self._next_seq(),
                        "written_at": now_iso(),
                        "payload": _canon(payload),
                    }
                )
            record = {"txn": txn}
            record["crc"] = _crc(record)
            self._append(TXN_FILE, record)
            for item in txn:
                self._index[item["kind"]][item["id"]] = _Entry(
                    item["seq"], item["written_at"], item["payload"]
                )
            return txn[-1]["seq"]

    def get(self, kind: str, entity_id: str) -> dict | None:
        self._require_kind(kind)
        with self._lock:
            entry = self._index[kind].get(entity_id)
            return copy.deepcopy(entry.payload) if entry else None

    def exists(self, kind: str, entity_id: str) -> bool:
        self._require_kind(kind)
        with self._lock:
            return entity_id in self._index[kind]

    def count(self, kind: str) -> int:
        self._require_kind(kind)
        with self._lock:
            return len(self._index[kind])

    def query(
        self,
        kind: str,
        filter: dict | None = None,
        created_at_from: str | None = None,
        created_at_to: str | None = None,
        order: str = "seq",
        limit: int | None = None,
    ) -> list[dict]:
        """Equality-filtered scan over the latest record per id.

        ``filter`` matches top-level payload fields exactly; created_at
        bounds are inclusive ISO-8601 strings compared on the kind's
        timestamp field. ``order`` is "seq" or "created_at".
        """
        self._require_kind(kind)
        if order not in ("seq", "created_at"):
            raise ValueError(f"unsupported order {order!r}")
        ts_field = _TS_FIELD.get(kind, "created_at")
        with self._lock:
            entries = list(self._index[kind].values())
        out = []
        for entry in entries:
            payload = entry.payload
            if filter and any(payload.get(k) != v for k, v in filter.items()):
                continue
            if created_at_from is not None or created_at_to is not None:
                ts = payload.get(ts_field)
                if ts is None:
                    continue
                if created_at_from is not None and ts < created_at_from:
                    continue
                if created_at_to is not None and ts > created_at_to:
                    continue
            out.append(entry)
        if order == "seq":
            out.sort(key=lambda e: e.seq)
        else:
            out.sort(key=lambda e: (e.payload.get(ts_field) or "", e.seq))
        if limit is not None:
            out = out[:limit]
        return [copy.deepcopy(e.payload) for e in out]

    def check_integrity(self) -> list[str]:
        """Global sweep: every foreign reference of every live entity resolves."""
        violations = []
        with self._lock:
            for kind in KINDS:
                for entity_id, entry in self._index[kind].items():
                    for ref in self._iter_refs(kind, entry.payload):
                        field, target_kind, target_id = ref
                        if target_id not in self._index[target_kind]:
                            violations.append(
                                f"{kind}/{entity_id}.{field} -> {target_kind}/{target_id} missing"
                            )
        return violations

    def close(self) -> None:
        with self._lock:
            for fh in self._files.values():
                fh.close()
            self._files.clear()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- internals --------------------------------------------------------------

    def _require_kind(self, kind: str) -> None:
        if kind not in KINDS:
            raise UnknownKind(f"unknown entity kind {kind!r}")

    def _check(
        self, kind: str, entity_id: str, payload: dict, pending: tuple[tuple[str, str], ...]
    ) -> None:
        self._require_kind(kind)
        if not entity_id:
            raise SchemaViolation("entity id must be non-empty")
        errors = sorted(_VALIDATORS[kind].iter_errors(payload), key=lambda e: e.json_path)
        if errors:
            first = errors[0]
            raise SchemaViolation(f"{kind} payload invalid at {first.json_path}: {first.message}")
        payload_id = payload.get("id", payload.get("run_id"))
        if payload_id != entity_id:
            raise SchemaViolation(
                f"{kind} payload id {payload_id!r} does not match entity id {entity_id!r}"
            )
        for field, target_kind, target_id in self._iter_refs(kind, payload):
            if target_id in self._index[target_kind]:
                continue
            if (target_kind, target_id) in pending:
                continue
            raise ReferentialIntegrityError(f"{kind}.{field} -> {target_kind}/{target_id}")

    def _iter_refs(self, kind: str, payload: dict):
        for field, target_kind, is_list in _REFS[kind]:
            value = payload.get(field)
            if value is None:
                continue
            if is_list:
                for target_id in value:
                    yield field, target_kind, target_id
            else:
                yield field, target_kind, value

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _append(self, file_key: str, record: dict) -> None:
        fh = self._files.get(file_key)
        if fh is None:
            fh = open(self.root / f"{file_key}.jsonl", "a", encoding="utf-8")
            self._files[file_key] = fh
        fh.write(canonical_json(record) + "\n")
        fh.flush()
        os.fsync(fh.fileno())

    def _write_manifest(self) -> None:
        manifest = {
            "format": "froav-entity-log-v1",
            "kinds": list(KINDS),
            "checksum": "crc32 over the canonical record without its crc field",
        }
        (self.root / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )

    def _replay(self) -> None:
        items: list[dict] = []
        for path in sorted(self.root.glob("*.jsonl")):
            items.extend(self._read_log(path))
        items.sort(key=lambda item: item["seq"])
        last_seq = 0
        for item in items:
            if item["seq"] <= last_seq:
                raise CorruptLog(
                    f"duplicate or non-increasing seq {item['seq']} during replay"
                )
            last_seq = item["seq"]
            kind = item["kind"]
            if kind not in self._index:
                raise CorruptLog(f"log contains unknown kind {kind!r}")
            self._index[kind][item["id"]] = _Entry(
                item["seq"], item["written_at"], item["payload"]
            )
        self._seq = last_seq

    def _read_log(self, path: Path) -> list[dict]:
        """Parse one log file; a damaged final record is dropped, damage elsewhere raises."""
        raw_lines = path.read_text(encoding="utf-8").split("\n")
        if raw_lines and raw_lines[-1] == "":
            raw_lines.pop()
        items: list[dict] = []
        for lineno, line in enumerate(raw_lines):
            is_last = lineno == len(raw_lines) - 1
            record = self._parse_record(line)
            if record is None:
                if is_last:
                    logger.warning("dropping torn trailing record in %s", path.name)
                    break
                raise CorruptLog(f"checksum failure at {path.name}:{lineno + 1}")
            if "txn" in record:
                items.extend(record["txn"])
            else:
                items.append(record)
        return items

    @staticmethod
    def _parse_record(line: str) -> dict | None:
        try:
            record = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return None
        if not isinstance(record, dict) or "crc" not in record:
            return None
        crc = record.pop("crc")
        if _crc(record) != crc:
            return None
        return record


def _canon(payload: dict) -> dict:
    """Round-trip through canonical form so the stored value is exactly what replays."""
    return json.loads(canonical_json(payload))
