"""Dimension-aligned human feedback with reviewer token authentication.

Human scores use the identical 1-10 integer scale and dimension names as
automated verdicts so the two streams join cleanly for correlation. One live
judgment per (report, reviewer, dimension): a resubmission archives the
previous record (append-only audit trail) and becomes the live one.

Tokens are static per-reviewer bearer tokens provisioned by the admin CLI;
only their SHA-256 hashes are ever stored.
"""

from __future__ import annotations

import hashlib
import secrets
import threading
from dataclasses import dataclass, field

from .canonical import new_id, now_iso
from .dims import SCORE_MAX, SCORE_MIN, validate_dimension
from .errors import AuthFailed, ScoreOutOfRange, UnknownReport
from .storage import Store

# submit path is compare-and-write on the (report, reviewer, dimension) key
_submit_lock = threading.Lock()


@dataclass
class Reviewer:
    id: str
    display_name: str
    token_hash: str
    created_at: str = field(default_factory=now_iso)
    revoked: bool = False

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "token_hash": self.token_hash,
            "created_at": self.created_at,
            "revoked": self.revoked,
        }


@dataclass
class HumanFeedback:
    id: str
    report_id: str
    reviewer_id: str
    dimension: str
    score: int
    comment: str = ""
    created_at: str = field(default_factory=now_iso)

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "report_id": self.report_id,
            "reviewer_id": self.reviewer_id,
            "dimension": self.dimension,
            "score": self.score,
            "comment": self.comment,
            "created_at": self.created_at,
        }


def hash_token(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


def add_reviewer(entities: Store, display_name: str) -> tuple[Reviewer, str]:
    """Create a reviewer and return the one-time plaintext token."""
    token = secrets.token_urlsafe(32)
    reviewer = Reviewer(id=new_id(), display_name=display_name, token_hash=hash_token(token))
    entities.put("reviewer", reviewer.id, reviewer.to_payload())
    return reviewer, token


def revoke_reviewer(entities: Store, reviewer_id: str) -> None:
    payload = entities.get("reviewer", reviewer_id)
    if payload is None:
        raise UnknownReport(f"unknown reviewer {reviewer_id!r}")
    payload["revoked"] = True
    entities.put("reviewer", reviewer_id, payload)


def authenticate(entities: Store, token: str) -> Reviewer:
    """Resolve a bearer token to a non-revoked reviewer."""
    if not token:
        raise AuthFailed("missing reviewer token")
    token_hash = hash_token(token)
    for payload in entities.query("reviewer"):
        if payload["token_hash"] == token_hash:
            if payload["revoked"]:
                raise AuthFailed("reviewer token has been revoked")
            return Reviewer(
                id=payload["id"],
                display_name=payload["display_name"],
                token_hash=payload["token_hash"],
                created_at=payload["created_at"],
                revoked=False,
            )
    raise AuthFailed("unknown reviewer token")


def _archived_ids(entities: Store, report_id: str) -> set[str]:
    return {
        marker["feedback_id"]
        for marker in entities.query("feedback_archive", filter={"report_id": report_id})
    }


def _live_feedback(entities: Store, report_id: str) -> list[dict]:
    archived = _archived_ids(entities, report_id)
    return [
        payload
        for payload in entities.query("feedback", filter={"report_id": report_id})
        if payload["id"] not in archived
    ]


def submit_feedback(
    entities: Store,
    reviewer_token: str,
    report_id: str,
    dimension: str,
    score: int,
    comment: str = "",
) -> HumanFeedback:
    """Persist one reviewer judgment, superseding any previous one for the same key."""
    reviewer = authenticate(entities, reviewer_token)
    if not entities.exists("report", report_id):
        raise UnknownReport(f"unknown report {report_id!r}")
    validate_dimension(dimension)
    if isinstance(score, bool) or not isinstance(score, int):
        raise ScoreOutOfRange(f"score must be an integer, got {score!r}")
    if not SCORE_MIN <= score <= SCORE_MAX:
        raise ScoreOutOfRange(f"score {score} outside [{SCORE_MIN}, {SCORE_MAX}]")

    record = HumanFeedback(
        id=new_id(),
        report_id=report_id,
        reviewer_id=reviewer.id,
        dimension=dimension,
        score=score,
        comment=comment,
    )
    with _submit_lock:
        previous = [
            p
            for p in _live_feedback(entities, report_id)
            if p["reviewer_id"] == reviewer.id and p["dimension"] == dimension
        ]
        items: list[tuple[str, str, dict]] = [("feedback", record.id, record.to_payload())]
        for old in previous:
            marker = {
                "id": new_id(),
                "feedback_id": old["id"],
                "report_id": report_id,
                "reviewer_id": reviewer.id,
                "dimension": dimension,
                "superseded_by": record.id,
                "archived_at": now_iso(),
            }
            items.append(("feedback_archive", marker["id"], marker))
        entities.put_many(items)
    return record


def list_feedback(entities: Store, report_id: str) -> list[HumanFeedback]:
    """Live records only, ordered by (dimension, reviewer_id)."""
    if not entities.exists("report", report_id):
        raise UnknownReport(f"unknown report {report_id!r}")
    live = _live_feedback(entities, report_id)
    live.sort(key=lambda p: (p["dimension"], p["reviewer_id"]))
    return [
        HumanFeedback(
            id=p["id"],
            report_id=p["report_id"],
            reviewer_id=p["reviewer_id"],
            dimension=p["dimension"],
            score=p["score"],
            comment=p["comment"],
            created_at=p["created_at"],
        )
        for p in live
    ]
