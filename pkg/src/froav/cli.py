"""Operator command line: ingestion, runs, evaluation, analysis, admin, serving.

Exit codes: 0 success, 1 domain error (ApiError-shaped JSON on stderr),
2 usage error. All commands honor --config and the FROAV_DATA_DIR
environment variable; there is no hidden state outside the data directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import analysis, feedback
from . import judge as judge_ops
from .config import BIND_ENV, DEFAULT_BIND, Platform, load_config
from .dims import DIMENSIONS
from .errors import FroavError, UnknownEntity
from .ingest import extract_text, make_document
from .nodes import run_workflow
from .rag import Report
from .workflow import WorkflowDef, validate

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="froav")
    parser.add_argument("--config", help="platform config JSON file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest text files as documents")
    p.add_argument("paths", nargs="+")
    p.add_argument("--format", default="plain", choices=["plain", "markdown", "external"])

    p = sub.add_parser("run", help="execute a workflow for a query")
    p.add_argument("--workflow", required=True, help="workflow id or JSON file path")
    p.add_argument("--query", required=True)
    p.add_argument("--documents", help="comma-separated document ids (default: all)")

    p = sub.add_parser("judge", help="evaluate a stored report")
    p.add_argument("report_id")

    p = sub.add_parser("analyze", help="correlation and judge-bias analytics")
    p.add_argument("kind", choices=["correlation", "judge-bias"])
    p.add_argument("--dimension", choices=list(DIMENSIONS))
    p.add_argument("--json", action="store_true", dest="as_json")
    p.add_argument("--csv", action="store_true", dest="as_csv")

    p = sub.add_parser("reviewer", help="manage reviewer accounts")
    reviewer_sub = p.add_subparsers(dest="reviewer_command", required=True)
    pa = reviewer_sub.add_parser("add")
    pa.add_argument("name")
    pr = reviewer_sub.add_parser("revoke")
    pr.add_argument("reviewer_id")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--bind", help=f"host:port (default {DEFAULT_BIND} or {BIND_ENV})")

    p = sub.add_parser("validate-workflow", help="check a workflow file")
    p.add_argument("file")

    return parser


def cmd_ingest(platform: Platform, args) -> int:
    for path in args.paths:
        raw = Path(path).read_bytes()
        text = extract_text(raw, args.format, platform.config.extractor)
        doc = make_document(text, source_uri=str(path), metadata={"filename": Path(path).name})
        platform.entities.put("document", doc.id, doc.to_payload())
        print(doc.id)
    return 0


def cmd_run(platform: Platform, args) -> int:
    defn = platform.resolve_workflow(args.workflow)
    if args.documents:
        document_ids = [d for d in args.documents.split(",") if d]
    else:
        document_ids = [p["id"] for p in platform.entities.query("document")]
    trace = run_workflow(
        platform, defn, {"query": args.query, "document_ids": document_ids}
    )
    print(f"run_id\t{trace.run_id}")
    reports = platform.entities.query("report", filter={"run_id": trace.run_id})
    for report in reports:
        print(f"report_id\t{report['id']}")
    if trace.status != "succeeded":
        failed = [e.to_payload() for e in trace.events if e.phase == "failed"]
        raise FroavError(f"run {trace.run_id} failed: {failed[:1]}")
    return 0


def cmd_judge(platform: Platform, args) -> int:
    payload = platform.entities.get("report", args.report_id)
    if payload is None:
        raise UnknownEntity(f"unknown report {args.report_id!r}")
    report = Report.from_payload(payload)
    judges = [platform.providers.get(name) for name in platform.config.judge_lineup]
    _, consensus = judge_ops.evaluate_report(
        report, platform.dimension_specs, judges, platform.entities
    )
    print(f"{'dimension':<20}{'consensus':>10}  verdicts")
    for c in consensus:
        print(f"{c.dimension:<20}{c.score:>10}  {len(c.verdict_ids)}")
    return 0


def _emit_rows(rows: list[dict], as_json: bool, as_csv: bool) -> None:
    if as_json:
        print(json.dumps(rows, indent=2, sort_keys=True))
        return
    if as_csv:
        if not rows:
            return
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        print(buf.getvalue(), end="")
        return
    if not rows:
        print("(no rows)")
        return
    headers = list(rows[0].keys())
    print("  ".join(f"{h:<18}" for h in headers))
    for row in rows:
        print("  ".join(f"{_cell(row[h]):<18}" for h in headers))


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def cmd_analyze(platform: Platform, args) -> int:
    if args.kind == "judge-bias":
        rows = analysis.judge_bias(platform.entities)
    else:
        if args.dimension:
            rows = [analysis.correlation_report(args.dimension, platform.entities).to_payload()]
        else:
            rows = [r.to_payload() for r in analysis.correlation_reports(platform.entities)]
            if not rows:
                raise FroavError("no dimension has enough paired human/consensus data")
    _emit_rows(rows, args.as_json, args.as_csv)
    return 0


def cmd_reviewer(platform: Platform, args) -> int:
    if args.reviewer_command == "add":
        reviewer, token = feedback.add_reviewer(platform.entities, args.name)
        print(f"reviewer_id\t{reviewer.id}")
        print(f"token\t{token}")
        print("store this token now; only its hash is kept", file=sys.stderr)
    else:
        feedback.revoke_reviewer(platform.entities, args.reviewer_id)
        print(f"revoked\t{args.reviewer_id}")
    return 0


def cmd_serve(platform: Platform, args) -> int:
    import os

    from .service import serve

    bind = args.bind or os.environ.get(BIND_ENV) or DEFAULT_BIND
    serve(platform, bind)
    return 0


def cmd_validate_workflow(platform: Platform, args) -> int:
    defn = WorkflowDef.from_file(args.file)
    violations = validate(defn, workflows={**platform.workflows, defn.id: defn})
    if violations:
        for v in violations:
            print(v)
        raise FroavError(f"{len(violations)} violation(s)")
    print("ok")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "run": cmd_run,
    "judge": cmd_judge,
    "analyze": cmd_analyze,
    "reviewer": cmd_reviewer,
    "serve": cmd_serve,
    "validate-workflow": cmd_validate_workflow,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        platform = Platform(config)
        try:
            return _COMMANDS[args.command](platform, args)
        finally:
            platform.close()
    except FroavError as exc:
        print(
            json.dumps({"status": exc.http_status, "code": exc.code, "message": exc.message}),
            file=sys.stderr,
        )
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(
            json.dumps({"status": 500, "code": "error", "message": f"{type(exc).__name__}: {exc}"}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
