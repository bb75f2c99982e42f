"""Document ingestion: text extraction and sliding-window chunking.

Chunk boundaries are character-offset sliding windows: window size C,
overlap V, step S = C - V. Offsets are Unicode scalar-value indices (Python
string indices), not bytes. All functions here are pure and safe to call
concurrently.
"""

from __future__ import annotations

import hashlib
import subprocess
from dataclasses import dataclass, field

import requests

from .canonical import canonical_bytes, now_iso
from .errors import EmptyContent, ExtractionFailed, UnsupportedFormat

FORMATS = ("plain", "markdown", "external")

DEFAULT_CHUNK_SIZE = 1200
DEFAULT_OVERLAP = 200


@dataclass(frozen=True)
class ChunkingConfig:
    chunk_size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_OVERLAP

    def __post_init__(self):
        if self.chunk_size <= 0:
            raise ValueError(f"chunk_size must be positive, got {self.chunk_size}")
        if self.overlap < 0:
            raise ValueError(f"overlap must be non-negative, got {self.overlap}")
        if self.overlap >= self.chunk_size:
            raise ValueError(
                f"overlap ({self.overlap}) must be smaller than chunk_size ({self.chunk_size})"
            )


@dataclass
class Document:
    id: str
    source_uri: str
    content: str
    metadata: dict[str, str] = field(default_factory=dict)
    ingested_at: str = field(default_factory=now_iso)

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "source_uri": self.source_uri,
            "content": self.content,
            "metadata": dict(self.metadata),
            "ingested_at": self.ingested_at,
        }


@dataclass
class Chunk:
    id: str
    document_id: str
    seq: int
    char_start: int
    char_end: int
    text: str
    metadata: dict[str, str] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "document_id": self.document_id,
            "seq": self.seq,
            "char_start": self.char_start,
            "char_end": self.char_end,
            "text": self.text,
            "metadata": dict(self.metadata),
        }


@dataclass(frozen=True)
class ExtractorConfig:
    """External text extractor: either a command line or an HTTP endpoint.

    Contract: raw bytes on stdin / request body, UTF-8 text on stdout /
    response body; non-zero exit or non-2xx status means failure.
    """

    command: tuple[str, ...] | None = None
    url: str | None = None
    timeout: float = 60.0


def document_id(content: str, source_uri: str) -> str:
    """Deterministic content-hash id: identical (content, source_uri) => identical id."""
    return hashlib.sha256(
        canonical_bytes({"content": content, "source_uri": source_uri})
    ).hexdigest()


def chunk_id(doc_id: str, seq: int) -> str:
    # zero-padded so lexicographic order of ids within a document matches seq order
    return f"{doc_id}:{seq:05d}"


def extract_text(raw: bytes, format: str, extractor: ExtractorConfig | None = None) -> str:
    """Convert raw source bytes into text ready for chunking.

    plain: UTF-8 decode with line endings normalized to \\n.
    markdown: UTF-8 decode, passed through verbatim.
    external: delegate to the configured extractor command/endpoint.
    """
    if format not in FORMATS:
        raise UnsupportedFormat(f"unknown format {format!r}; expected one of {FORMATS}")
    if not raw:
        raise EmptyContent("raw input is empty")

    if format == "external":
        text = _run_external(raw, extractor)
    else:
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExtractionFailed(f"input is not valid UTF-8: {exc}") from exc
        if format == "plain":
            text = text.replace("\r\n", "\n").replace("\r", "\n")

    if not text:
        raise EmptyContent("extraction produced no text")
    return text


def _run_external(raw: bytes, extractor: ExtractorConfig | None) -> str:
    if extractor is None or (extractor.command is None and extractor.url is None):
        raise ExtractionFailed("no external extractor configured")
    if extractor.command is not None:
        try:
            proc = subprocess.run(
                list(extractor.command),
                input=raw,
                capture_output=True,
                timeout=extractor.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExtractionFailed(f"extractor command failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise ExtractionFailed(
                f"extractor exited with status {proc.returncode}: "
                f"{proc.stderr.decode('utf-8', 'replace')[:500]}"
            )
        return proc.stdout.decode("utf-8", "replace")
    try:
        resp = requests.post(extractor.url, data=raw, timeout=extractor.timeout)
    except requests.RequestException as exc:
        raise ExtractionFailed(f"extractor endpoint unreachable: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise ExtractionFailed(f"extractor endpoint returned {resp.status_code}")
    return resp.text


def make_document(
    content: str, source_uri: str, metadata: dict[str, str] | None = None
) -> Document:
    if not content:
        raise EmptyContent("document content is empty")
    return Document(
        id=document_id(content, source_uri),
        source_uri=source_uri,
        content=content,
        metadata=dict(metadata or {}),
    )


def chunk_text(doc: Document, cfg: ChunkingConfig) -> list[Chunk]:
    """Split a document into overlapping chunks.

    Chunk i spans [i*S, min(i*S + C, len)) with S = C - V; emission stops at
    the first chunk whose end reaches the end of the content. Every index of
    the content is covered and consecutive chunks share exactly V characters
    (except possibly at the final, shorter chunk).
    """
    content = doc.content
    if not content:
        raise EmptyContent("document content is empty")
    size, step = cfg.chunk_size, cfg.chunk_size - cfg.overlap
    length = len(content)

    chunks: list[Chunk] = []
    i = 0
    while True:
        start = i * step
        end = min(start + size, length)
        meta = dict(doc.metadata)
        meta["seq"] = str(i)
        chunks.append(
            Chunk(
                id=chunk_id(doc.id, i),
                document_id=doc.id,
                seq=i,
                char_start=start,
                char_end=end,
                text=content[start:end],
                metadata=meta,
            )
        )
        if end == length:
            return chunks
        i += 1
