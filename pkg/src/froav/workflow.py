"""Declarative DAG workflow execution with retries and complete tracing.

Workflows are authored as JSON files (no visual editor): typed nodes wired
by (from_node, output_port, to_node, input_port) edges. Node implementations
are plain callables registered by kind::

    impl(node: NodeDef, ports: dict[str, object], ctx) -> dict[str, object]

The returned dict maps output ports to JSON values; payloads between nodes
are JSON values, and large artifacts travel by storage reference. Every run
produces an ExecutionTrace with one started event per attempt and exactly
one terminal event (succeeded/failed/skipped) per node, with stable digests
of canonicalized node inputs and outputs.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

from .canonical import digest, new_id, now_iso
from .errors import NodeImplementationMissing, ValidationFailed

logger = logging.getLogger(__name__)

NODE_KINDS = (
    "ingest",
    "chunk",
    "embed",
    "retrieve",
    "generate",
    "judge",
    "consensus",
    "persist",
    "subworkflow",
    "command",
)

DEFAULT_PORT = "out"


@dataclass
class RetryPolicy:
    max_retries: int = 0
    backoff_ms: int = 50

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_ms <= 0:
            raise ValueError("backoff_ms must be > 0")


@dataclass
class NodeDef:
    id: str
    kind: str
    params: dict = field(default_factory=dict)
    retry: RetryPolicy = field(default_factory=RetryPolicy)


@dataclass
class Edge:
    from_node: str
    output_port: str
    to_node: str
    input_port: str


@dataclass
class WorkflowDef:
    id: str
    nodes: list[NodeDef]
    edges: list[Edge]

    @classmethod
    def from_dict(cls, data: dict) -> "WorkflowDef":
        nodes = [
            NodeDef(
                id=n["id"],
                kind=n.get("kind", ""),
                params=n.get("params", {}),
                retry=RetryPolicy(**n.get("retry", {})),
            )
            for n in data.get("nodes", [])
        ]
        edges = [
            Edge(
                from_node=e["from_node"],
                output_port=e.get("output_port", DEFAULT_PORT),
                to_node=e["to_node"],
                input_port=e.get("input_port", "in"),
            )
            for e in data.get("edges", [])
        ]
        return cls(id=data["id"], nodes=nodes, edges=edges)

    @classmethod
    def from_file(cls, path: str | Path) -> "WorkflowDef":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind,
                    "params": n.params,
                    "retry": {"max_retries": n.retry.max_retries, "backoff_ms": n.retry.backoff_ms},
                }
                for n in self.nodes
            ],
            "edges": [
                {
                    "from_node": e.from_node,
                    "output_port": e.output_port,
                    "to_node": e.to_node,
                    "input_port": e.input_port,
                }
                for e in self.edges
            ],
        }


@dataclass
class NodeEvent:
    node_id: str
    attempt: int
    phase: str  # started | succeeded | failed | skipped
    input_digest: str | None = None
    output_digest: str | None = None
    duration_ms: int | None = None
    error: str | None = None
    ts: str = field(default_factory=now_iso)
    child_run_id: str | None = None

    def to_payload(self) -> dict:
        return {
            "node_id": self.node_id,
            "attempt": self.attempt,
            "phase": self.phase,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "duration_ms": self.duration_ms,
            "error": self.error,
            "ts": self.ts,
            "child_run_id": self.child_run_id,
        }


@dataclass
class ExecutionTrace:
    run_id: str
    workflow_id: str
    started_at: str
    finished_at: str | None = None
    status: str = "running"
    events: list[NodeEvent] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "run_id": self.run_id,
            "workflow_id": self.workflow_id,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "status": self.status,
            "events": [e.to_payload() for e in self.events],
        }

    def terminal_events(self) -> list[NodeEvent]:
        return [e for e in self.events if e.phase in ("succeeded", "failed", "skipped")]


def validate(
    defn: WorkflowDef,
    known_kinds: set[str] | None = None,
    workflows: dict[str, WorkflowDef] | None = None,
) -> list[str]:
    """Structural checks; an empty list means the definition is executable."""
    kinds = known_kinds if known_kinds is not None else set(NODE_KINDS)
    workflows = workflows or {}
    violations: list[str] = []

    node_ids = [n.id for n in defn.nodes]
    seen: set[str] = set()
    for node_id in node_ids:
        if node_id in seen:
            violations.append(f"duplicate node id: {node_id}")
        seen.add(node_id)

    for node in defn.nodes:
        if node.kind not in kinds:
            violations.append(f"unknown node kind: {node.id} is {node.kind!r}")

    targets: set[tuple[str, str]] = set()
    for edge in defn.edges:
        if edge.from_node not in seen:
            violations.append(f"dangling edge source: {edge.from_node}")
        if edge.to_node not in seen:
            violations.append(f"dangling edge target: {edge.to_node}")
        key = (edge.to_node, edge.input_port)
        if key in targets:
            violations.append(
                f"input port {edge.to_node}.{edge.input_port} has multiple incoming edges"
            )
        targets.add(key)

    cycle = _find_cycle(defn)
    if cycle:
        violations.append("cycle: " + ",".join(cycle))

    for node in defn.nodes:
        if node.kind != "subworkflow":
            continue
        child_id = node.params.get("workflow_id")
        if not child_id:
            violations.append(f"subworkflow node {node.id} missing params.workflow_id")
            continue
        problem = _check_subworkflow_chain(defn.id, child_id, workflows, seen_ids={defn.id})
        if problem:
            violations.append(problem)

    return violations


def _find_cycle(defn: WorkflowDef) -> list[str]:
    adjacency: dict[str, list[str]] = {n.id: [] for n in defn.nodes}
    for e in defn.edges:
        if e.from_node in adjacency and e.to_node in adjacency:
            adjacency[e.from_node].append(e.to_node)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in adjacency}
    stack_path: list[str] = []

    def visit(u: str) -> list[str] | None:
        color[u] = GRAY
        stack_path.append(u)
        for v in adjacency[u]:
            if color[v] == GRAY:
                return stack_path[stack_path.index(v):]
            if color[v] == WHITE:
                found = visit(v)
                if found:
                    return found
        stack_path.pop()
        color[u] = BLACK
        return None

    for node_id in sorted(adjacency):
        if color[node_id] == WHITE:
            found = visit(node_id)
            if found:
                return sorted(found)
    return []


def _check_subworkflow_chain(
    root_id: str,
    child_id: str,
    workflows: dict[str, WorkflowDef],
    seen_ids: set[str],
) -> str | None:
    if child_id in seen_ids:
        return f"recursive subworkflow: {child_id}"
    if child_id not in workflows:
        return f"unknown subworkflow: {child_id}"
    child = workflows[child_id]
    for node in child.nodes:
        if node.kind != "subworkflow":
            continue
        grandchild = node.params.get("workflow_id")
        if not grandchild:
            return f"subworkflow node {node.id} missing params.workflow_id"
        problem = _check_subworkflow_chain(
            root_id, grandchild, workflows, seen_ids | {child_id}
        )
        if problem:
            return problem
    return None


class WorkflowEngine:
    """Executes validated workflow definitions with bounded parallelism.

    Node implementations must be reentrant; trace event appends are
    serialized. ``trace_sink`` is called once with the running trace before
    any node starts and once with the final trace before execute returns.
    """

    def __init__(
        self,
        registry: dict[str, object],
        workflows: dict[str, WorkflowDef] | None = None,
        parallelism: int = 4,
        trace_sink=None,
        context_factory=None,
    ):
        self.registry = dict(registry)
        self.workflows = dict(workflows or {})
        self.parallelism = max(1, parallelism)
        self.trace_sink = trace_sink
        # called once per run with (run_id, inputs); its result is handed to every node
        self.context_factory = context_factory

    def validate(self, defn: WorkflowDef) -> list[str]:
        # standard kinds validate structurally even when this engine lacks an
        # implementation; execute() then reports the missing implementation
        kinds = set(NODE_KINDS) | set(self.registry)
        return validate(defn, known_kinds=kinds, workflows=self.workflows)

    def execute(
        self, defn: WorkflowDef, inputs: dict, run_id: str | None = None
    ) -> ExecutionTrace:
        trace, _ = self.execute_with_outputs(defn, inputs, run_id=run_id)
        return trace

    def execute_with_outputs(
        self, defn: WorkflowDef, inputs: dict, run_id: str | None = None
    ) -> tuple[ExecutionTrace, dict[str, dict]]:
        """Run a workflow and also return each node's output ports (for composition)."""
        violations = self.validate(defn)
        if violations:
            raise ValidationFailed(violations)
        for node in defn.nodes:
            if node.kind != "subworkflow" and node.kind not in self.registry:
                raise NodeImplementationMissing(f"no implementation for kind {node.kind!r}")

        run = _RunState(self, defn, inputs, run_id=run_id)
        trace = run.execute()
        return trace, run.outputs


class _RunState:
    def __init__(
        self,
        engine: WorkflowEngine,
        defn: WorkflowDef,
        inputs: dict,
        run_id: str | None = None,
    ):
        self.engine = engine
        self.defn = defn
        self.inputs = inputs
        self.trace = ExecutionTrace(
            run_id=run_id or new_id(), workflow_id=defn.id, started_at=now_iso()
        )
        self.ctx = (
            engine.context_factory(self.trace.run_id, inputs)
            if engine.context_factory is not None
            else None
        )
        self.nodes = {n.id: n for n in defn.nodes}
        self.upstream: dict[str, list[Edge]] = {n.id: [] for n in defn.nodes}
        self.downstream: dict[str, list[str]] = {n.id: [] for n in defn.nodes}
        for e in defn.edges:
            self.upstream[e.to_node].append(e)
            self.downstream[e.from_node].append(e.to_node)
        self.outputs: dict[str, dict] = {}
        self.terminal: dict[str, str] = {}
        self._event_lock = threading.Lock()

    def _emit(self, event: NodeEvent) -> None:
        with self._event_lock:
            self.trace.events.append(event)

    def _sink(self) -> None:
        if self.engine.trace_sink is not None:
            self.engine.trace_sink(self.trace)

    def execute(self) -> ExecutionTrace:
        self._sink()  # make the run visible (and referenceable) before nodes start
        pending = set(self.nodes)
        with ThreadPoolExecutor(max_workers=self.engine.parallelism) as pool:
            futures = {}
            while pending or futures:
                ready = [
                    node_id
                    for node_id in sorted(pending)
                    if all(
                        self.terminal.get(e.from_node) == "succeeded"
                        for e in self.upstream[node_id]
                    )
                ]
                for node_id in ready:
                    pending.discard(node_id)
                    futures[pool.submit(self._run_node, self.nodes[node_id])] = node_id
                if not futures:
                    break
                done, _ = wait(futures, return_when=FIRST_COMPLETED)
                for fut in done:
                    node_id = futures.pop(fut)
                    status = fut.result()
                    self.terminal[node_id] = status
                    if status == "failed":
                        self._skip_downstream(node_id, pending)

        # anything still pending had an upstream that did not succeed
        for node_id in sorted(pending):
            self._mark_skipped(node_id)

        self.trace.finished_at = now_iso()
        self.trace.status = (
            "succeeded"
            if all(s == "succeeded" for s in self.terminal.values())
            else "failed"
        )
        self._sink()
        return self.trace

    def _skip_downstream(self, node_id: str, pending: set[str]) -> None:
        stack = list(self.downstream[node_id])
        while stack:
            current = stack.pop()
            if current in pending:
                pending.discard(current)
                self._mark_skipped(current)
            stack.extend(self.downstream[current])

    def _mark_skipped(self, node_id: str) -> None:
        if node_id in self.terminal:
            return
        self.terminal[node_id] = "skipped"
        self._emit(NodeEvent(node_id=node_id, attempt=0, phase="skipped"))

    def _run_node(self, node: NodeDef) -> str:
        ports = {
            e.input_port: self.outputs[e.from_node].get(e.output_port)
            for e in self.upstream[node.id]
        }
        input_digest = digest(
            {"params": node.params, "ports": ports, "workflow_inputs": self.inputs}
        )
        start = time.monotonic()
        last_error = ""
        attempts = node.retry.max_retries + 1
        for attempt in range(1, attempts + 1):
            if attempt > 1:
                time.sleep(node.retry.backoff_ms * (2 ** (attempt - 2)) / 1000.0)
            self._emit(
                NodeEvent(node_id=node.id, attempt=attempt, phase="started",
                          input_digest=input_digest)
            )
            try:
                child_run_id = None
                if node.kind == "subworkflow":
                    outputs, child_run_id = self._run_subworkflow(node, ports)
                else:
                    impl = self.engine.registry[node.kind]
                    outputs = impl(node, ports, self.ctx)
                if not isinstance(outputs, dict):
                    outputs = {DEFAULT_PORT: outputs}
            except Exception as exc:  # noqa: BLE001 - node failures become trace events
                last_error = f"{type(exc).__name__}: {exc}"
                logger.warning(
                    "node %s attempt %d/%d failed: %s", node.id, attempt, attempts, last_error
                )
                continue
            self.outputs[node.id] = outputs
            self._emit(
                NodeEvent(
                    node_id=node.id,
                    attempt=attempt,
                    phase="succeeded",
                    input_digest=input_digest,
                    output_digest=digest(outputs),
                    duration_ms=int((time.monotonic() - start) * 1000),
                    child_run_id=child_run_id,
                )
            )
            return "succeeded"
        self._emit(
            NodeEvent(
                node_id=node.id,
                attempt=attempts,
                phase="failed",
                input_digest=input_digest,
                duration_ms=int((time.monotonic() - start) * 1000),
                error=last_error,
            )
        )
        return "failed"

    def _run_subworkflow(self, node: NodeDef, ports: dict) -> tuple[dict, str]:
        child = self.engine.workflows[node.params["workflow_id"]]
        child_inputs = dict(self.inputs)
        for value in ports.values():
            if isinstance(value, dict):
                child_inputs.update(value)
        child_trace, child_outputs = self.engine.execute_with_outputs(child, child_inputs)
        if child_trace.status != "succeeded":
            raise RuntimeError(f"subworkflow {child.id!r} run {child_trace.run_id} failed")
        # the child's result is the merged default-port output of its sink nodes
        non_sinks = {e.from_node for e in child.edges}
        merged: dict = {}
        for child_node in child.nodes:
            if child_node.id in non_sinks:
                continue
            value = child_outputs.get(child_node.id, {}).get(DEFAULT_PORT)
            if isinstance(value, dict):
                merged.update(value)
        return {DEFAULT_PORT: merged}, child_trace.run_id
