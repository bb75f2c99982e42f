"""The four evaluation dimension names, shared by judges, human feedback, and storage.

Automated verdicts and human feedback validate against the same tuple, which
is what keeps the two score streams joinable for correlation analysis.
"""

from __future__ import annotations

from .errors import InvalidDimension

DIMENSIONS = ("Reliability", "Completeness", "Understandability", "Relevance")

SCORE_MIN = 1
SCORE_MAX = 10


def validate_dimension(name: str) -> str:
    if name not in DIMENSIONS:
        raise InvalidDimension(
            f"unknown dimension {name!r}; expected one of {', '.join(DIMENSIONS)}"
        )
    return name
