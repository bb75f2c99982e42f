"""Retrieval context assembly and candidate report generation.

The generated Report is the unit everything downstream evaluates: judges
score it, reviewers score it, and the correlation analysis joins the two.
Full provenance is kept on the record: the run that produced it, the exact
context chunk ids in retrieval order, and the generator model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .canonical import new_id, now_iso
from .errors import EmptyStore, TemplateError, UnknownEntity
from .ingest import Chunk
from .providers import ChatRequest, EmbeddingRequest, ProviderClient
from .storage import Store
from .vector_store import VectorStore

DEFAULT_RETRIEVAL_K = 8

DEFAULT_PROMPT_TEMPLATE = """You are a careful analyst. Answer the question using only the numbered source excerpts below. Cite excerpts by their bracketed number. If the sources do not contain the answer, say so.

Question: {query}

Sources:
{context}

Write a concise, well-structured report."""


@dataclass
class Report:
    id: str
    run_id: str
    query: str
    context_chunk_ids: list[str]
    generator_model_id: str
    text: str
    created_at: str = field(default_factory=now_iso)

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "run_id": self.run_id,
            "query": self.query,
            "context_chunk_ids": list(self.context_chunk_ids),
            "generator_model_id": self.generator_model_id,
            "text": self.text,
            "created_at": self.created_at,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Report":
        return cls(
            id=payload["id"],
            run_id=payload["run_id"],
            query=payload["query"],
            context_chunk_ids=list(payload["context_chunk_ids"]),
            generator_model_id=payload["generator_model_id"],
            text=payload["text"],
            created_at=payload["created_at"],
        )


def build_context(
    query: str,
    k: int,
    vstore: VectorStore,
    embedder: ProviderClient,
    entities: Store,
) -> list[tuple[Chunk, float]]:
    """Embed the query and return the top-k chunks with scores, in retrieval order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(vstore) == 0:
        raise EmptyStore("vector store is empty")
    response = embedder.embed(EmbeddingRequest(texts=[query]))
    hits = vstore.search_top_k(response.vectors[0], k)
    out: list[tuple[Chunk, float]] = []
    for hit in hits:
        payload = entities.get("chunk", hit.chunk_id)
        if payload is None:
            raise UnknownEntity(f"chunk {hit.chunk_id!r} is indexed but not stored")
        out.append(
            (
                Chunk(
                    id=payload["id"],
                    document_id=payload["document_id"],
                    seq=payload["seq"],
                    char_start=payload["char_start"],
                    char_end=payload["char_end"],
                    text=payload["text"],
                    metadata=payload["metadata"],
                ),
                hit.score,
            )
        )
    return out


def render_context_blocks(context: list[tuple[Chunk, float]]) -> str:
    """Numbered context blocks, each labeled with its chunk id for traceable citations."""
    blocks = []
    for i, (chunk, _score) in enumerate(context, start=1):
        blocks.append(f"[{i}] (chunk {chunk.id})\n{chunk.text}")
    return "\n\n".join(blocks)


def render_prompt(template: str, query: str, context: list[tuple[Chunk, float]]) -> str:
    for placeholder in ("{query}", "{context}"):
        if placeholder not in template:
            raise TemplateError(f"prompt template is missing the {placeholder} placeholder")
    return template.replace("{query}", query).replace(
        "{context}", render_context_blocks(context)
    )


def generate_report(
    query: str,
    context: list[tuple[Chunk, float]],
    generator: ProviderClient,
    prompt_template: str,
    run_id: str,
    entities: Store,
) -> Report:
    """Render the prompt, call the generator, persist and return the Report."""
    if not context:
        raise ValueError("context must be non-empty")
    user_prompt = render_prompt(prompt_template, query, context)
    response = generator.chat(
        ChatRequest(
            system_prompt="You write grounded analytical reports from provided sources.",
            user_prompt=user_prompt,
            temperature=0.0,
            response_format_hint="freeform",
        )
    )
    report = Report(
        id=new_id(),
        run_id=run_id,
        query=query,
        context_chunk_ids=[chunk.id for chunk, _ in context],
        generator_model_id=response.model_id,
        text=response.text,
    )
    entities.put("report", report.id, report.to_payload())
    return report
