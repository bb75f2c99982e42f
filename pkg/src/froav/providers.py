"""Clients for chat-completion and embedding endpoints, plus deterministic mocks.

Real providers speak a single JSON-over-HTTP wire shape:

    chat:      POST endpoint_url  {"system": .., "user": .., "temperature": ..} -> {"text": ..}
    embedding: POST endpoint_url  {"texts": [..]}                               -> {"vectors": [[..]]}

Secrets are never stored in config; ``auth_env_var`` names the environment
variable holding the bearer token.

Mock providers are selected with a ``mock:`` endpoint URL and are bitwise
deterministic functions of their inputs:

    mock://embedding?dim=64      hashed bag-of-words embedder (see mock_embed_rule)
    mock://chat                  text derived from FNV-1a of (model_id, system, user)

Mock chat query parameters (all optional, test plumbing):
    bias=<int>         added to the derived judge score, clamped to [1, 10]
    fixed_score=<int>  judge score is always this value
    garbage=always     emit unparseable output on every call
    garbage=first      emit unparseable output unless the prompt is a repair re-prompt
"""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from urllib.parse import parse_qs, urlparse

import requests

from .canonical import canonical_bytes, fnv1a64
from .errors import AuthMissing, EmptyText, ProviderError, ProviderTimeout

logger = logging.getLogger(__name__)

# Marker the judge module puts in repair re-prompts; mock `garbage=first`
# providers start cooperating when they see it.
REPAIR_MARKER = "Your previous response could not be parsed."

BACKOFF_BASE_S = 0.1


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    kind: str  # "chat" | "embedding"
    endpoint_url: str
    model_id: str
    auth_env_var: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    max_concurrent: int = 4

    def __post_init__(self):
        if self.kind not in ("chat", "embedding"):
            raise ValueError(f"kind must be 'chat' or 'embedding', got {self.kind!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    response_format_hint: str = "freeform"  # "freeform" | "json"

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")


@dataclass
class ChatResponse:
    text: str
    model_id: str
    latency_ms: int


@dataclass
class EmbeddingRequest:
    texts: list[str]


@dataclass
class EmbeddingResponse:
    vectors: list[list[float]]
    dimension: int
    model_id: str


def mock_embed_rule(text: str, dim: int) -> list[float]:
    """Deterministic hashed bag-of-words embedding.

    Lowercase, split on whitespace; each token's FNV-1a 64-bit hash mod dim
    increments a bucket; the count vector is L2-normalized.
    """
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    tokens = text.lower().split()
    if not tokens:
        raise EmptyText("cannot embed empty text")
    buckets = [0.0] * dim
    for tok in tokens:
        buckets[fnv1a64(tok.encode("utf-8")) % dim] += 1.0
    norm = math.sqrt(sum(v * v for v in buckets))
    return [v / norm for v in buckets]


def _mock_params(endpoint_url: str) -> dict[str, str]:
    qs = parse_qs(urlparse(endpoint_url).query)
    return {k: v[0] for k, v in qs.items()}


def _mock_chat_text(cfg: ProviderConfig, req: ChatRequest) -> str:
    params = _mock_params(cfg.endpoint_url)
    seed = fnv1a64(
        canonical_bytes(
            {"model": cfg.model_id, "system": req.system_prompt, "user": req.user_prompt}
        )
    )
    garbage = params.get("garbage")
    if garbage == "always" or (garbage == "first" and REPAIR_MARKER not in req.user_prompt):
        return f"score basket {seed:016x} -- not structured output"

    if req.response_format_hint == "json":
        if "fixed_score" in params:
            score = int(params["fixed_score"])
        else:
            score = 1 + seed % 10
        score = max(1, min(10, score + int(params.get("bias", "0"))))
        body = (
            f'{{"score": {score}, "rationale": '
            f'"Deterministic assessment {seed:016x} by {cfg.model_id}."}}'
        )
        # alternate fenced/bare output so downstream parsing stays honest
        if seed % 2 == 0:
            return f"```json\n{body}\n```"
        return body

    return (
        f"Analysis {seed:016x} by {cfg.model_id}.\n"
        "Summary: the retrieved material was synthesized into the findings below.\n"
        f"Key finding: indicator {seed % 97} of 97 with confidence {seed % 100}/100."
    )


class ProviderClient:
    """Thread-safe client for one configured provider.

    In-flight calls are capped by a counting semaphore (max_concurrent);
    transient failures (timeouts, connection errors, 5xx) are retried up to
    max_retries times with exponential, non-decreasing backoff.
    """

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self._semaphore = threading.BoundedSemaphore(cfg.max_concurrent)
        self._sleep = time.sleep  # injectable for backoff tests
        self.attempts_made = 0  # cumulative, for instrumentation

    @property
    def is_mock(self) -> bool:
        return self.cfg.endpoint_url.startswith("mock:")

    # -- public ops ---------------------------------------------------------

    def chat(self, req: ChatRequest) -> ChatResponse:
        if self.cfg.kind != "chat":
            raise ValueError(f"provider {self.cfg.name!r} is not a chat provider")
        start = time.monotonic()
        with self._semaphore:
            if self.is_mock:
                self.attempts_made += 1
                text = _mock_chat_text(self.cfg, req)
            else:
                payload = {
                    "system": req.system_prompt,
                    "user": req.user_prompt,
                    "temperature": req.temperature,
                }
                data = self._post_with_retries(payload)
                if "text" not in data:
                    raise ProviderError("chat response missing 'text' field", body=str(data)[:500])
                text = data["text"]
        latency_ms = int((time.monotonic() - start) * 1000)
        return ChatResponse(text=text, model_id=self.cfg.model_id, latency_ms=latency_ms)

    def embed(self, req: EmbeddingRequest) -> EmbeddingResponse:
        if self.cfg.kind != "embedding":
            raise ValueError(f"provider {self.cfg.name!r} is not an embedding provider")
        for t in req.texts:
            if not t.strip():
                raise EmptyText("cannot embed empty text")
        with self._semaphore:
            if self.is_mock:
                self.attempts_made += 1
                dim = int(_mock_params(self.cfg.endpoint_url).get("dim", "64"))
                vectors = [mock_embed_rule(t, dim) for t in req.texts]
            else:
                data = self._post_with_retries({"texts": req.texts})
                vectors = data.get("vectors")
                if not isinstance(vectors, list) or len(vectors) != len(req.texts):
                    raise ProviderError(
                        "embedding response vector count does not match input",
                        body=str(data)[:500],
                    )
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ProviderError(f"embedding response has mixed dimensions {sorted(dims)}")
        return EmbeddingResponse(
            vectors=vectors, dimension=dims.pop(), model_id=self.cfg.model_id
        )

    # -- HTTP plumbing -------------------------------------------------------

    def _auth_headers(self) -> dict[str, str]:
        if not self.cfg.auth_env_var:
            return {}
        key = os.environ.get(self.cfg.auth_env_var)
        if not key:
            raise AuthMissing(
                f"environment variable {self.cfg.auth_env_var!r} is not set "
                f"(required by provider {self.cfg.name!r})"
            )
        return {"Authorization": f"Bearer {key}"}

    def _post_with_retries(self, payload: dict) -> dict:
        headers = self._auth_headers()
        last_exc: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt > 0:
                # exponential and therefore non-decreasing
                self._sleep(BACKOFF_BASE_S * (2 ** (attempt - 1)))
            self.attempts_made += 1
            try:
                resp = requests.post(
                    self.cfg.endpoint_url,
                    json=payload,
                    headers=headers,
                    timeout=self.cfg.timeout,
                )
            except requests.Timeout:
                last_exc = ProviderTimeout(
                    f"provider {self.cfg.name!r} timed out after {self.cfg.timeout}s"
                )
                logger.warning("attempt %d against %s timed out", attempt + 1, self.cfg.name)
                continue
            except requests.RequestException as exc:
                last_exc = ProviderError(f"provider {self.cfg.name!r} unreachable: {exc}")
                continue
            if 200 <= resp.status_code < 300:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProviderError(
                        f"provider {self.cfg.name!r} returned non-JSON body",
                        status=resp.status_code,
                        body=resp.text[:500],
                    ) from exc
            if resp.status_code >= 500:
                last_exc = ProviderError(
                    f"provider {self.cfg.name!r} returned {resp.status_code}",
                    status=resp.status_code,
                    body=resp.text[:500],
                )
                continue
            # 4xx is not transient: fail immediately
            raise ProviderError(
                f"provider {self.cfg.name!r} returned {resp.status_code}",
                status=resp.status_code,
                body=resp.text[:500],
            )
        assert last_exc is not None
        raise last_exc


@dataclass
class ProviderRegistry:
    """Named provider clients; one client (and one concurrency limit) per provider."""

    clients: dict[str, ProviderClient] = field(default_factory=dict)

    @classmethod
    def from_configs(cls, configs: list[ProviderConfig]) -> "ProviderRegistry":
        reg = cls()
        for cfg in configs:
            if cfg.name in reg.clients:
                raise ValueError(f"duplicate provider name {cfg.name!r}")
            reg.clients[cfg.name] = ProviderClient(cfg)
        return reg

    def get(self, name: str) -> ProviderClient:
        if name not in self.clients:
            raise KeyError(f"unknown provider {name!r}")
        return self.clients[name]
