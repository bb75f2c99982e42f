"""Multi-model, four-dimension report evaluation with median consensus.

Each dimension is scored by every judge model in the lineup (fanned out
concurrently within per-provider limits). Per dimension, the consensus score
is the median of the successful verdicts, which keeps a single outlier model
from dragging the aggregate. A judge whose output cannot be parsed gets one
repair re-prompt; if that also fails, a failed verdict is recorded and
excluded from aggregation. A dimension's verdicts and its consensus persist
as one atomic transaction.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .canonical import new_id, now_iso
from .dims import DIMENSIONS, SCORE_MAX, SCORE_MIN, validate_dimension
from .errors import AllJudgesFailed, EmptyInput, ParseFailure, ScoreOutOfRange
from .providers import REPAIR_MARKER, ChatRequest, ProviderClient
from .rag import Report
from .storage import Store

logger = logging.getLogger(__name__)

FORMAT_INSTRUCTION = (
    'Respond with a single JSON object exactly of the form '
    '{"score": <integer 1-10>, "rationale": "<your reasoning>"} '
    "where 10 is best. No other text is required."
)

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class DimensionSpec:
    name: str
    definition: str
    focus: str
    system_prompt: str

    def __post_init__(self):
        validate_dimension(self.name)


@dataclass
class JudgeVerdict:
    id: str
    report_id: str
    dimension: str
    judge_model_id: str
    score: int
    rationale: str
    raw_response: str
    created_at: str = field(default_factory=now_iso)

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "report_id": self.report_id,
            "dimension": self.dimension,
            "judge_model_id": self.judge_model_id,
            "status": "ok",
            "score": self.score,
            "rationale": self.rationale,
            "raw_response": self.raw_response,
            "error": None,
            "created_at": self.created_at,
        }


@dataclass
class ConsensusScore:
    report_id: str
    dimension: str
    score: float
    verdict_ids: list[str]
    method: str = "median"
    created_at: str = field(default_factory=now_iso)

    @property
    def id(self) -> str:
        # one live consensus per (report, dimension); re-judging supersedes it
        return f"{self.report_id}:{self.dimension}"

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "report_id": self.report_id,
            "dimension": self.dimension,
            "score": self.score,
            "method": self.method,
            "verdict_ids": list(self.verdict_ids),
            "created_at": self.created_at,
        }


def load_dimension_specs(payloads: list[dict]) -> list[DimensionSpec]:
    """Build the four dimension specs; names must be exactly the canonical four."""
    specs = [
        DimensionSpec(
            name=p["name"],
            definition=p["definition"],
            focus=p["focus"],
            system_prompt=p["system_prompt"],
        )
        for p in payloads
    ]
    names = [s.name for s in specs]
    if sorted(names) != sorted(DIMENSIONS):
        raise ValueError(
            f"expected exactly the dimensions {DIMENSIONS}, got {tuple(names)}"
        )
    order = {name: i for i, name in enumerate(DIMENSIONS)}
    specs.sort(key=lambda s: order[s.name])
    return specs


def median(scores: list[float]) -> float:
    """Sort; odd count takes the middle element, even count averages the middle pair."""
    if not scores:
        raise EmptyInput("median of empty score list")
    ordered = sorted(scores)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def render_judge_prompt(dim: DimensionSpec, report: Report) -> ChatRequest:
    """Deterministic judge request: same (dimension, report) yields byte-identical prompts."""
    user_prompt = (
        f"Evaluate the {dim.name} of the report below.\n"
        f"{dim.name} means: {dim.definition}. Focus on: {dim.focus}.\n\n"
        "--- REPORT START ---\n"
        f"{report.text}\n"
        "--- REPORT END ---\n\n"
        f"{FORMAT_INSTRUCTION}"
    )
    return ChatRequest(
        system_prompt=dim.system_prompt,
        user_prompt=user_prompt,
        temperature=0.0,
        response_format_hint="json",
    )


def render_repair_prompt(dim: DimensionSpec, report: Report, invalid_output: str) -> ChatRequest:
    base = render_judge_prompt(dim, report)
    user_prompt = (
        f"{REPAIR_MARKER}\n"
        "Invalid response was:\n"
        f"{invalid_output}\n\n"
        f"{base.user_prompt}"
    )
    return ChatRequest(
        system_prompt=base.system_prompt,
        user_prompt=user_prompt,
        temperature=0.0,
        response_format_hint="json",
    )


def parse_verdict(raw: str) -> tuple[int, str]:
    """Extract the first JSON object in raw and validate it as a (score, rationale) pair.

    Tolerates surrounding prose and code fences.
    """
    candidates = [m.group(1) for m in _FENCE_RE.finditer(raw)]
    candidates.append(raw)
    obj = None
    for text in candidates:
        obj = _first_json_object(text)
        if obj is not None:
            break
    if obj is None:
        raise ParseFailure("no JSON object found in judge output")

    if "score" not in obj or "rationale" not in obj:
        raise ParseFailure(f"judge JSON missing required keys: {sorted(obj)}")
    score = obj["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise ParseFailure(f"score is not a number: {score!r}")
    if isinstance(score, float):
        if not score.is_integer():
            raise ParseFailure(f"score is not an integer: {score!r}")
        score = int(score)
    if not SCORE_MIN <= score <= SCORE_MAX:
        raise ScoreOutOfRange(f"score {score} outside [{SCORE_MIN}, {SCORE_MAX}]")
    rationale = obj["rationale"]
    if not isinstance(rationale, str) or not rationale.strip():
        raise ParseFailure("rationale is missing or empty")
    return score, rationale


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    pos = text.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pos = text.find("{", pos + 1)
            continue
        return obj if isinstance(obj, dict) else None
    return None


def collect_verdicts(
    report: Report,
    dims: list[DimensionSpec],
    judges: list[ProviderClient],
) -> list[dict]:
    """Fan out |dims| x |judges| chat calls; returns verdict payloads (ok and failed)."""
    if not judges:
        raise ValueError("judge lineup is empty")
    tasks = [(dim, judge) for dim in dims for judge in judges]
    with ThreadPoolExecutor(max_workers=max(1, len(tasks))) as pool:
        return list(pool.map(lambda t: _judge_once(report, *t), tasks))


def _judge_once(report: Report, dim: DimensionSpec, judge: ProviderClient) -> dict:
    request = render_judge_prompt(dim, report)
    response = judge.chat(request)
    raw = response.text
    try:
        score, rationale = parse_verdict(raw)
    except (ParseFailure, ScoreOutOfRange) as first_error:
        repair = render_repair_prompt(dim, report, raw)
        response = judge.chat(repair)
        raw = response.text
        try:
            score, rationale = parse_verdict(raw)
        except (ParseFailure, ScoreOutOfRange) as second_error:
            logger.warning(
                "judge %s failed on %s twice: %s / %s",
                judge.cfg.model_id, dim.name, first_error, second_error,
            )
            return {
                "id": new_id(),
                "report_id": report.id,
                "dimension": dim.name,
                "judge_model_id": judge.cfg.model_id,
                "status": "failed",
                "score": None,
                "rationale": None,
                "raw_response": raw,
                "error": str(second_error),
                "created_at": now_iso(),
            }
    return JudgeVerdict(
        id=new_id(),
        report_id=report.id,
        dimension=dim.name,
        judge_model_id=judge.cfg.model_id,
        score=score,
        rationale=rationale,
        raw_response=raw,
    ).to_payload()


def aggregate_and_persist(
    entities: Store,
    report_id: str,
    verdict_payloads: list[dict],
    dims: list[DimensionSpec] | None = None,
) -> list[ConsensusScore]:
    """Median-aggregate per dimension and persist each dimension atomically.

    Each dimension's verdict records (including failed ones) and its
    consensus record are written as a single transaction. Raises
    AllJudgesFailed if any covered dimension has zero successful verdicts.
    """
    dim_names = [d.name for d in dims] if dims else list(DIMENSIONS)
    consensus_scores: list[ConsensusScore] = []
    for name in dim_names:
        group = [v for v in verdict_payloads if v["dimension"] == name]
        if not group:
            continue
        ok = [v for v in group if v["status"] == "ok"]
        items = [("verdict", v["id"], v) for v in group]
        if not ok:
            entities.put_many(items)
            raise AllJudgesFailed(name)
        consensus = ConsensusScore(
            report_id=report_id,
            dimension=name,
            score=median([v["score"] for v in ok]),
            verdict_ids=[v["id"] for v in ok],
        )
        items.append(("consensus", consensus.id, consensus.to_payload()))
        entities.put_many(items)
        consensus_scores.append(consensus)
    return consensus_scores


def evaluate_report(
    report: Report,
    dims: list[DimensionSpec],
    judges: list[ProviderClient],
    entities: Store,
) -> tuple[list[JudgeVerdict], list[ConsensusScore]]:
    """Full evaluation: fan out judges, aggregate medians, persist per dimension."""
    payloads = collect_verdicts(report, dims, judges)
    consensus = aggregate_and_persist(entities, report.id, payloads, dims)
    verdicts = [
        JudgeVerdict(
            id=v["id"],
            report_id=v["report_id"],
            dimension=v["dimension"],
            judge_model_id=v["judge_model_id"],
            score=v["score"],
            rationale=v["rationale"],
            raw_response=v["raw_response"],
            created_at=v["created_at"],
        )
        for v in payloads
        if v["status"] == "ok"
    ]
    return verdicts, consensus
