"""Domain exceptions shared across the platform.

Every error carries a stable machine ``code`` and the HTTP status the
service layer maps it to. Keeping the taxonomy in one place guarantees the
CLI and the HTTP API report failures identically.
"""

from __future__ import annotations


class FroavError(Exception):
    """Base class for all domain errors."""

    code = "error"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


# --- ingest ---------------------------------------------------------------

class UnsupportedFormat(FroavError):
    code = "unsupported_format"
    http_status = 422


class ExtractionFailed(FroavError):
    code = "extraction_failed"
    http_status = 502


class EmptyContent(FroavError):
    code = "empty_content"
    http_status = 422


# --- providers ------------------------------------------------------------

class AuthMissing(FroavError):
    code = "auth_missing"
    http_status = 500


class ProviderTimeout(FroavError):
    code = "timeout"
    http_status = 504


class ProviderError(FroavError):
    code = "provider_error"
    http_status = 502

    def __init__(self, message: str = "", status: int | None = None, body: str = ""):
        super().__init__(message or f"provider returned status {status}")
        self.status = status
        self.body = body


class EmptyText(FroavError):
    code = "empty_text"
    http_status = 422


# --- vector store ---------------------------------------------------------

class DimensionMismatch(FroavError):
    code = "dimension_mismatch"
    http_status = 422


class EmptyStore(FroavError):
    code = "empty_store"
    http_status = 409


# --- workflow -------------------------------------------------------------

class ValidationFailed(FroavError):
    code = "validation_failed"
    http_status = 422

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class NodeImplementationMissing(FroavError):
    code = "node_implementation_missing"
    http_status = 500


# --- rag ------------------------------------------------------------------

class TemplateError(FroavError):
    code = "template_error"
    http_status = 422


# --- judge ----------------------------------------------------------------

class ParseFailure(FroavError):
    code = "parse_failure"
    http_status = 422


class ScoreOutOfRange(FroavError):
    code = "score_out_of_range"
    http_status = 422


class AllJudgesFailed(FroavError):
    code = "all_judges_failed"
    http_status = 502

    def __init__(self, dimension: str):
        super().__init__(f"no judge produced a usable verdict for dimension {dimension!r}")
        self.dimension = dimension


class EmptyInput(FroavError):
    code = "empty_input"
    http_status = 422


# --- feedback -------------------------------------------------------------

class AuthFailed(FroavError):
    code = "auth_failed"
    http_status = 401


class UnknownReport(FroavError):
    code = "unknown_entity"
    http_status = 404


class InvalidDimension(FroavError):
    code = "invalid_dimension"
    http_status = 422


# --- storage --------------------------------------------------------------

class SchemaViolation(FroavError):
    code = "schema_violation"
    http_status = 422


class ReferentialIntegrityError(FroavError):
    code = "referential_integrity"
    http_status = 409

    def __init__(self, missing_ref: str):
        super().__init__(f"missing reference: {missing_ref}")
        self.missing_ref = missing_ref


class UnknownKind(FroavError):
    code = "unknown_kind"
    http_status = 422


class CorruptLog(FroavError):
    code = "corrupt_log"
    http_status = 500


# --- analysis -------------------------------------------------------------

class LengthMismatch(FroavError):
    code = "length_mismatch"
    http_status = 422


class ZeroVariance(FroavError):
    code = "zero_variance"
    http_status = 422


class Degenerate(FroavError):
    code = "degenerate"
    http_status = 422


class InsufficientData(FroavError):
    code = "insufficient_data"
    http_status = 422

    def __init__(self, n: int):
        super().__init__(f"insufficient data: {n} qualifying sample(s)")
        self.n = n


# --- service --------------------------------------------------------------

class UnknownEntity(FroavError):
    code = "unknown_entity"
    http_status = 404
