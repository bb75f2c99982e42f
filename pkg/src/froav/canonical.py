"""Canonical JSON, stable hashing, ids, and timestamps.

Canonical form is UTF-8 JSON with sorted keys and no insignificant
whitespace. Every digest in the platform (entity payloads, workflow node
inputs/outputs, document ids) is computed over this form so that repeated
runs on identical data produce identical hashes.
"""

from __future__ import annotations

import hashlib
import json
import uuid
from datetime import datetime, timezone

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def canonical_json(value) -> str:
    """Serialize a JSON value into its canonical textual form."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(value) -> bytes:
    return canonical_json(value).encode("utf-8")


def digest(value) -> str:
    """sha256 hex digest of the canonical form of a JSON value."""
    return hashlib.sha256(canonical_bytes(value)).hexdigest()


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash; fixed so independent implementations agree bit-for-bit."""
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _U64
    return h


def now_iso() -> str:
    """Current UTC time, ISO 8601 with microseconds (lexicographically sortable)."""
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def new_id() -> str:
    return uuid.uuid4().hex
