"""Human-vs-automated correlation, judge bias diagnostics, and inter-annotator agreement.

All computations are pure reads over storage snapshots. Where a report has
several human scores for one dimension, they are averaged before
correlation; a positive mean offset means the automated consensus scores
higher than the humans do.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

from .dims import DIMENSIONS, validate_dimension
from .errors import Degenerate, InsufficientData, LengthMismatch, ZeroVariance
from .storage import Store


@dataclass
class CorrelationReport:
    dimension: str
    n: int
    pearson_r: float | None
    spearman_rho: float | None
    mean_human: float
    mean_consensus: float
    mean_offset: float  # consensus - human

    def to_payload(self) -> dict:
        return {
            "dimension": self.dimension,
            "n": self.n,
            "pearson_r": self.pearson_r,
            "spearman_rho": self.spearman_rho,
            "mean_human": self.mean_human,
            "mean_consensus": self.mean_consensus,
            "mean_offset": self.mean_offset,
        }


@dataclass
class AgreementReport:
    dimension: str
    reviewer_pair: tuple[str, str]
    cohen_kappa: float | None
    n: int

    def to_payload(self) -> dict:
        return {
            "dimension": self.dimension,
            "reviewer_pair": list(self.reviewer_pair),
            "cohen_kappa": self.cohen_kappa,
            "n": self.n,
        }


def pearson(x: list[float], y: list[float]) -> float:
    """Product-moment correlation coefficient."""
    if len(x) != len(y):
        raise LengthMismatch(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise LengthMismatch(f"need at least 2 samples, got {n}")
    mx = sum(x) / n
    my = sum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = sum(a * a for a in dx)
    syy = sum(b * b for b in dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("correlation undefined for constant input")
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)


def _average_ranks(values: list[float]) -> list[float]:
    """1-based ranks; tied values receive the mean of their rank positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(x: list[float], y: list[float]) -> float:
    """Pearson over average-ranked data (ties receive mean ranks)."""
    if len(x) != len(y):
        raise LengthMismatch(f"length mismatch: {len(x)} vs {len(y)}")
    return pearson(_average_ranks(x), _average_ranks(y))


def cohen_kappa(a: list, b: list) -> float:
    """Chance-corrected exact-match agreement between two raters."""
    if len(a) != len(b):
        raise LengthMismatch(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 1:
        raise LengthMismatch("need at least 1 co-annotated item")
    p_o = sum(1 for u, v in zip(a, b) if u == v) / n
    counts_a: dict = defaultdict(int)
    counts_b: dict = defaultdict(int)
    for u in a:
        counts_a[u] += 1
    for v in b:
        counts_b[v] += 1
    p_e = sum(counts_a[c] * counts_b.get(c, 0) for c in counts_a) / (n * n)
    if p_e == 1.0:
        raise Degenerate("expected agreement is 1; kappa undefined")
    return (p_o - p_e) / (1 - p_e)


def _consensus_by_report(entities: Store, dimension: str) -> dict[str, float]:
    return {
        p["report_id"]: p["score"]
        for p in entities.query("consensus", filter={"dimension": dimension})
    }


def _human_means_by_report(entities: Store, dimension: str) -> dict[str, float]:
    archived = {
        marker["feedback_id"] for marker in entities.query("feedback_archive")
    }
    sums: dict[str, list[int]] = defaultdict(list)
    for p in entities.query("feedback", filter={"dimension": dimension}):
        if p["id"] in archived:
            continue
        sums[p["report_id"]].append(p["score"])
    return {rid: sum(scores) / len(scores) for rid, scores in sums.items()}


def correlation_report(dimension: str, entities: Store) -> CorrelationReport:
    """Pair consensus scores with mean human scores per report and correlate.

    Coefficients are None when the paired samples are constant (undefined
    rather than an error, so partially-degenerate datasets still report
    counts and offsets).
    """
    validate_dimension(dimension)
    consensus = _consensus_by_report(entities, dimension)
    human = _human_means_by_report(entities, dimension)
    paired_ids = sorted(set(consensus) & set(human))
    n = len(paired_ids)
    if n < 2:
        raise InsufficientData(n)
    x = [consensus[rid] for rid in paired_ids]  # automated
    y = [human[rid] for rid in paired_ids]
    try:
        r = pearson(x, y)
    except ZeroVariance:
        r = None
    try:
        rho = spearman(x, y)
    except ZeroVariance:
        rho = None
    return CorrelationReport(
        dimension=dimension,
        n=n,
        pearson_r=r,
        spearman_rho=rho,
        mean_human=sum(y) / n,
        mean_consensus=sum(x) / n,
        mean_offset=sum(a - b for a, b in zip(x, y)) / n,
    )


def judge_bias(entities: Store) -> list[dict]:
    """Mean signed deviation from consensus per (judge model, dimension).

    Only consensus records backed by at least two contributing verdicts
    qualify; single-judge lineups carry no deviation information.
    """
    deviations: dict[tuple[str, str], list[float]] = defaultdict(list)
    qualifying = 0
    for consensus in entities.query("consensus"):
        verdict_ids = consensus["verdict_ids"]
        if len(verdict_ids) < 2:
            continue
        qualifying += 1
        for vid in verdict_ids:
            verdict = entities.get("verdict", vid)
            if verdict is None or verdict["status"] != "ok":
                continue
            key = (verdict["judge_model_id"], consensus["dimension"])
            deviations[key].append(verdict["score"] - consensus["score"])
    if qualifying == 0:
        raise InsufficientData(0)
    rows = []
    for (model, dimension), values in sorted(deviations.items()):
        rows.append(
            {
                "judge_model_id": model,
                "dimension": dimension,
                "mean_deviation": sum(values) / len(values),
                "n": len(values),
            }
        )
    return rows


def agreement_reports(entities: Store, dimension: str) -> list[AgreementReport]:
    """Cohen's kappa per reviewer pair on reports both annotated for the dimension."""
    validate_dimension(dimension)
    archived = {m["feedback_id"] for m in entities.query("feedback_archive")}
    by_reviewer: dict[str, dict[str, int]] = defaultdict(dict)
    for p in entities.query("feedback", filter={"dimension": dimension}):
        if p["id"] in archived:
            continue
        by_reviewer[p["reviewer_id"]][p["report_id"]] = p["score"]
    reviewers = sorted(by_reviewer)
    reports = []
    for i, ra in enumerate(reviewers):
        for rb in reviewers[i + 1:]:
            shared = sorted(set(by_reviewer[ra]) & set(by_reviewer[rb]))
            if not shared:
                continue
            a = [by_reviewer[ra][rid] for rid in shared]
            b = [by_reviewer[rb][rid] for rid in shared]
            try:
                kappa = cohen_kappa(a, b)
            except Degenerate:
                kappa = None
            reports.append(
                AgreementReport(
                    dimension=dimension,
                    reviewer_pair=(ra, rb),
                    cohen_kappa=kappa,
                    n=len(shared),
                )
            )
    return reports


def correlation_reports(entities: Store) -> list[CorrelationReport]:
    """Correlation for every dimension that has enough paired data."""
    out = []
    for dimension in DIMENSIONS:
        try:
            out.append(correlation_report(dimension, entities))
        except InsufficientData:
            continue
    return out
