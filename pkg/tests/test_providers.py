from __future__ import annotations

import math
import threading

import pytest

from conftest import mock_chat_client, mock_embed_client
from froav.canonical import fnv1a64
from froav.errors import AuthMissing, EmptyText, ProviderError, ProviderTimeout
from froav.providers import (
    ChatRequest,
    EmbeddingRequest,
    ProviderClient,
    ProviderConfig,
    mock_embed_rule,
)


def http_client(url: str, **overrides) -> ProviderClient:
    params = dict(
        name="real",
        kind="chat",
        endpoint_url=url,
        model_id="real-model",
        timeout=2.0,
        max_retries=2,
        max_concurrent=3,
    )
    params.update(overrides)
    return ProviderClient(ProviderConfig(**params))


class TestMockEmbedRule:
    def test_single_token_one_hot(self):
        vec = mock_embed_rule("x", 8)
        bucket = fnv1a64(b"x") % 8
        assert vec[bucket] == 1.0
        assert sum(1 for v in vec if v != 0.0) == 1

    def test_count_semantics(self):
        vec = mock_embed_rule("x x y", 8)
        bx, by = fnv1a64(b"x") % 8, fnv1a64(b"y") % 8
        assert bx != by  # distinct buckets for this pair at dim 8
        assert math.isclose(sum(v * v for v in vec), 1.0, rel_tol=1e-12)
        assert math.isclose(vec[bx] / vec[by], 2.0, rel_tol=1e-12)

    def test_deterministic(self):
        assert mock_embed_rule("the same text", 64) == mock_embed_rule("the same text", 64)

    def test_dim_lower_bound(self):
        with pytest.raises(ValueError):
            mock_embed_rule("x", 4)

    def test_empty_text(self):
        with pytest.raises(EmptyText):
            mock_embed_rule("   ", 8)

    def test_two_nonzero_buckets_for_two_distinct_tokens(self):
        vec = mock_embed_rule("cash flow cash", 64)
        nonzero = [v for v in vec if v != 0.0]
        assert len(nonzero) == 2
        assert math.isclose(math.sqrt(sum(v * v for v in vec)), 1.0, rel_tol=1e-12)


class TestMockEmbedClient:
    def test_scaling_invariance(self):
        client = mock_embed_client()
        a = client.embed(EmbeddingRequest(texts=["a a"])).vectors[0]
        b = client.embed(EmbeddingRequest(texts=["a"])).vectors[0]
        cos = sum(x * y for x, y in zip(a, b))
        assert math.isclose(cos, 1.0, rel_tol=1e-12)

    def test_empty_text_rejected(self):
        with pytest.raises(EmptyText):
            mock_embed_client().embed(EmbeddingRequest(texts=[""]))

    def test_one_vector_per_text_constant_dim(self):
        resp = mock_embed_client(dim=32).embed(EmbeddingRequest(texts=["a", "b c", "d"]))
        assert len(resp.vectors) == 3
        assert all(len(v) == 32 for v in resp.vectors)
        assert resp.dimension == 32


class TestMockChatClient:
    def test_deterministic(self):
        client = mock_chat_client()
        req = ChatRequest(system_prompt="s", user_prompt="u")
        assert client.chat(req).text == client.chat(req).text

    def test_varies_with_prompts(self):
        client = mock_chat_client()
        a = client.chat(ChatRequest(system_prompt="s", user_prompt="u1")).text
        b = client.chat(ChatRequest(system_prompt="s", user_prompt="u2")).text
        assert a != b

    def test_json_hint_yields_parseable_verdict(self):
        client = mock_chat_client()
        text = client.chat(
            ChatRequest(system_prompt="s", user_prompt="u", response_format_hint="json")
        ).text
        assert '"score"' in text and '"rationale"' in text

    def test_kind_mismatch(self):
        with pytest.raises(ValueError):
            mock_chat_client().embed(EmbeddingRequest(texts=["x"]))


class TestAuth:
    def test_auth_env_var_unset(self, fake_server):
        url, _ = fake_server
        client = http_client(url, auth_env_var="FROAV_TEST_MISSING_KEY")
        with pytest.raises(AuthMissing):
            client.chat(ChatRequest(system_prompt="s", user_prompt="u"))

    def test_auth_env_var_set(self, fake_server, monkeypatch):
        url, handler = fake_server
        handler.script = [(200, {"text": "hello"})]
        monkeypatch.setenv("FROAV_TEST_KEY", "secret")
        client = http_client(url, auth_env_var="FROAV_TEST_KEY")
        assert client.chat(ChatRequest(system_prompt="s", user_prompt="u")).text == "hello"


class TestRetries:
    def test_transient_500s_then_success(self, fake_server):
        url, handler = fake_server
        handler.script = [(500, {}), (500, {}), (200, {"text": "recovered"})]
        client = http_client(url, max_retries=2)
        client._sleep = lambda s: None
        resp = client.chat(ChatRequest(system_prompt="s", user_prompt="u"))
        assert resp.text == "recovered"
        assert handler.calls == 3

    def test_retry_count_bounded(self, fake_server):
        url, handler = fake_server
        handler.script = [(500, {})]
        client = http_client(url, max_retries=2)
        client._sleep = lambda s: None
        with pytest.raises(ProviderError):
            client.chat(ChatRequest(system_prompt="s", user_prompt="u"))
        assert handler.calls == 3  # max_retries + 1

    def test_4xx_fails_immediately(self, fake_server):
        url, handler = fake_server
        handler.script = [(400, {"error": "bad"})]
        client = http_client(url, max_retries=2)
        with pytest.raises(ProviderError) as excinfo:
            client.chat(ChatRequest(system_prompt="s", user_prompt="u"))
        assert excinfo.value.status == 400
        assert handler.calls == 1

    def test_backoff_non_decreasing(self, fake_server):
        url, handler = fake_server
        handler.script = [(500, {})]
        client = http_client(url, max_retries=3)
        delays = []
        client._sleep = delays.append
        with pytest.raises(ProviderError):
            client.chat(ChatRequest(system_prompt="s", user_prompt="u"))
        assert len(delays) == 3
        assert delays == sorted(delays)

    def test_timeout_raised(self, fake_server):
        url, handler = fake_server
        handler.script = [(200, {"text": "late"})]
        handler.delay_s = 1.0
        client = http_client(url, timeout=0.2, max_retries=0)
        with pytest.raises(ProviderTimeout):
            client.chat(ChatRequest(system_prompt="s", user_prompt="u"))


class TestConcurrencyLimit:
    def test_in_flight_never_exceeds_max_concurrent(self, fake_server):
        url, handler = fake_server
        handler.script = [(200, {"text": "ok"})]
        handler.delay_s = 0.05
        client = http_client(url, max_concurrent=3, max_retries=0)

        threads = [
            threading.Thread(
                target=lambda: client.chat(ChatRequest(system_prompt="s", user_prompt="u"))
            )
            for _ in range(12)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert handler.calls == 12
        assert handler.max_in_flight <= 3


class TestChatRequestValidation:
    def test_temperature_bounds(self):
        with pytest.raises(ValueError):
            ChatRequest(system_prompt="s", user_prompt="u", temperature=2.5)
