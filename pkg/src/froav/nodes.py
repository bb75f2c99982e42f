"""Built-in node implementations for the workflow engine.

Each node is a thin wrapper over a module operation. Payloads between nodes
are small JSON objects; documents, chunks, and vectors travel by storage
reference (ids), never by value. The ``command`` kind covers custom logic:
it pipes the merged payload as JSON to an external command's stdin and reads
the output payload from its stdout.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass

from . import judge as judge_ops
from . import rag
from .config import Platform
from .errors import UnknownEntity
from .ingest import Chunk, Document, chunk_text, extract_text, make_document
from .providers import EmbeddingRequest
from .storage import Store
from .vector_store import EmbeddingRecord
from .workflow import NodeDef, WorkflowDef, WorkflowEngine


@dataclass
class RunContext:
    platform: Platform
    run_id: str
    inputs: dict


def _merged(ports: dict, ctx: RunContext) -> dict:
    """Working payload for a node: workflow inputs overlaid with upstream outputs."""
    data = dict(ctx.inputs)
    for value in ports.values():
        if isinstance(value, dict):
            data.update(value)
    return data


def _document_from_payload(payload: dict) -> Document:
    return Document(
        id=payload["id"],
        source_uri=payload["source_uri"],
        content=payload["content"],
        metadata=payload["metadata"],
        ingested_at=payload["ingested_at"],
    )


def _chunk_from_payload(payload: dict) -> Chunk:
    return Chunk(
        id=payload["id"],
        document_id=payload["document_id"],
        seq=payload["seq"],
        char_start=payload["char_start"],
        char_end=payload["char_end"],
        text=payload["text"],
        metadata=payload["metadata"],
    )


def ingest_documents(
    entities: Store,
    documents: list[dict],
    default_format: str = "plain",
    extractor=None,
) -> list[str]:
    """Persist raw document specs ({source_uri, text, metadata?, format?})."""
    ids = []
    for spec in documents:
        fmt = spec.get("format", default_format)
        text = extract_text(spec["text"].encode("utf-8"), fmt, extractor)
        doc = make_document(text, spec.get("source_uri", ""), spec.get("metadata"))
        entities.put("document", doc.id, doc.to_payload())
        ids.append(doc.id)
    return ids


def node_ingest(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    document_ids = list(data.get("document_ids", []))
    for doc_id in document_ids:
        if not ctx.platform.entities.exists("document", doc_id):
            raise UnknownEntity(f"unknown document {doc_id!r}")
    documents = data.get("documents", [])
    if documents:
        document_ids.extend(
            ingest_documents(
                ctx.platform.entities,
                documents,
                default_format=node.params.get("format", "plain"),
                extractor=ctx.platform.config.extractor,
            )
        )
    if not document_ids:
        # no explicit selection: run over the whole ingested corpus
        document_ids = [p["id"] for p in ctx.platform.entities.query("document")]
    if not document_ids:
        raise ValueError("no documents provided and none ingested yet")
    return {"out": {"document_ids": document_ids}}


def node_chunk(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    cfg = ctx.platform.config.chunking
    if "chunk_size" in node.params or "overlap" in node.params:
        cfg = type(cfg)(
            chunk_size=node.params.get("chunk_size", cfg.chunk_size),
            overlap=node.params.get("overlap", cfg.overlap),
        )
    entities = ctx.platform.entities
    chunk_ids = []
    for doc_id in data["document_ids"]:
        payload = entities.get("document", doc_id)
        if payload is None:
            raise UnknownEntity(f"unknown document {doc_id!r}")
        chunks = chunk_text(_document_from_payload(payload), cfg)
        entities.put_many([("chunk", c.id, c.to_payload()) for c in chunks])
        chunk_ids.extend(c.id for c in chunks)
    return {"out": {"document_ids": data["document_ids"], "chunk_ids": chunk_ids}}


def node_embed(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    platform = ctx.platform
    client = platform.providers.get(node.params.get("provider", platform.config.embedder))
    entities = platform.entities
    chunks = []
    for chunk_id in data["chunk_ids"]:
        payload = entities.get("chunk", chunk_id)
        if payload is None:
            raise UnknownEntity(f"unknown chunk {chunk_id!r}")
        chunks.append(_chunk_from_payload(payload))
    response = client.embed(EmbeddingRequest(texts=[c.text for c in chunks]))
    vstore = platform.vector_store_for(response.model_id, dimension=response.dimension)
    records = []
    for chunk, vector in zip(chunks, response.vectors):
        meta = dict(chunk.metadata)
        meta["document_id"] = chunk.document_id
        records.append(
            EmbeddingRecord.create(
                chunk_id=chunk.id,
                document_id=chunk.document_id,
                vector=vector,
                embedder_model_id=response.model_id,
                metadata=meta,
            )
        )
    vstore.upsert(records)
    path = platform.save_vector_store(response.model_id)
    entities.put(
        "embedding_manifest",
        response.model_id,
        {
            "id": response.model_id,
            "embedder_model_id": response.model_id,
            "dimension": response.dimension,
            "count": len(vstore),
            "path": str(path),
        },
    )
    return {
        "out": {
            "document_ids": data.get("document_ids", []),
            "embedded_count": len(records),
            "embedder_model_id": response.model_id,
        }
    }


def node_retrieve(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    platform = ctx.platform
    client = platform.providers.get(node.params.get("provider", platform.config.embedder))
    k = node.params.get("k", platform.config.retrieval_k)
    vstore = platform.vector_store_for(client.cfg.model_id)
    context = rag.build_context(data["query"], k, vstore, client, platform.entities)
    return {
        "out": {
            "query": data["query"],
            "context_chunk_ids": [chunk.id for chunk, _ in context],
            "retrieval_scores": [score for _, score in context],
        }
    }


def node_generate(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    platform = ctx.platform
    client = platform.providers.get(node.params.get("provider", platform.config.generator))
    entities = platform.entities
    scores = data.get("retrieval_scores") or [0.0] * len(data["context_chunk_ids"])
    context = []
    for chunk_id, score in zip(data["context_chunk_ids"], scores):
        payload = entities.get("chunk", chunk_id)
        if payload is None:
            raise UnknownEntity(f"unknown chunk {chunk_id!r}")
        context.append((_chunk_from_payload(payload), score))
    template = platform.prompt_template
    if node.params.get("template_path"):
        with open(node.params["template_path"], encoding="utf-8") as fh:
            template = fh.read()
    report = rag.generate_report(
        data["query"], context, client, template, ctx.run_id, entities
    )
    return {"out": {"report_id": report.id}}


def node_judge(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    platform = ctx.platform
    payload = platform.entities.get("report", data["report_id"])
    if payload is None:
        raise UnknownEntity(f"unknown report {data['report_id']!r}")
    report = rag.Report.from_payload(payload)
    lineup = node.params.get("judges", platform.config.judge_lineup)
    judges = [platform.providers.get(name) for name in lineup]
    verdicts = judge_ops.collect_verdicts(report, platform.dimension_specs, judges)
    return {"out": {"report_id": report.id, "verdicts": verdicts}}


def node_consensus(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    consensus = judge_ops.aggregate_and_persist(
        ctx.platform.entities,
        data["report_id"],
        data["verdicts"],
        ctx.platform.dimension_specs,
    )
    return {
        "out": {
            "report_id": data["report_id"],
            "consensus": {c.dimension: c.score for c in consensus},
            "verdict_ids": sorted(vid for c in consensus for vid in c.verdict_ids),
        }
    }


def node_persist(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    data = _merged(ports, ctx)
    violations = ctx.platform.entities.check_integrity()
    if violations:
        raise RuntimeError(f"integrity sweep failed: {violations[:5]}")
    return {
        "out": {
            "report_id": data.get("report_id"),
            "integrity_ok": True,
            "consensus": data.get("consensus", {}),
        }
    }


def node_command(node: NodeDef, ports: dict, ctx: RunContext) -> dict:
    """Code-injection point: merged payload JSON on stdin, output payload on stdout."""
    data = _merged(ports, ctx)
    command = node.params["command"]
    proc = subprocess.run(
        list(command),
        input=json.dumps(data).encode("utf-8"),
        capture_output=True,
        timeout=node.params.get("timeout", 120),
    )
    if proc.returncode != 0:
        raise RuntimeError(
            f"command exited with {proc.returncode}: "
            f"{proc.stderr.decode('utf-8', 'replace')[:500]}"
        )
    return {"out": json.loads(proc.stdout.decode("utf-8"))}


def default_registry() -> dict:
    return {
        "ingest": node_ingest,
        "chunk": node_chunk,
        "embed": node_embed,
        "retrieve": node_retrieve,
        "generate": node_generate,
        "judge": node_judge,
        "consensus": node_consensus,
        "persist": node_persist,
        "command": node_command,
    }


def build_engine(platform: Platform, parallelism: int | None = None) -> WorkflowEngine:
    def sink(trace):
        platform.entities.put("trace", trace.run_id, trace.to_payload())

    def context_factory(run_id: str, inputs: dict) -> RunContext:
        return RunContext(platform=platform, run_id=run_id, inputs=inputs)

    return WorkflowEngine(
        registry=default_registry(),
        workflows=platform.workflows,
        parallelism=parallelism or platform.config.parallelism,
        trace_sink=sink,
        context_factory=context_factory,
    )


def run_workflow(platform: Platform, defn: WorkflowDef, inputs: dict):
    """Execute a workflow against the platform, persisting defs and the trace."""
    platform.register_workflow(defn)
    for wf in platform.workflows.values():
        platform.entities.put("workflow", wf.id, wf.to_payload())
    engine = build_engine(platform)
    return engine.execute(defn, inputs)
