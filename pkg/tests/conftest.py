from __future__ import annotations

import http.server
import json
import sys
import threading
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from froav.config import Platform, load_config
from froav.providers import ProviderClient, ProviderConfig
from froav.storage import Store

FIXTURE_DOCS = [
    {
        "source_uri": "fixtures/filing-alpha.txt",
        "text": (
            "Alpha Corp reported revenue of 120 million, up ten percent year over year. "
            "Operating cash flow reached 30 million while capital expenditure stayed flat. "
            "Management attributes the growth to recurring subscriptions. "
        )
        * 12,
        "metadata": {"title": "Alpha filing", "period": "FY25"},
    },
    {
        "source_uri": "fixtures/filing-beta.txt",
        "text": (
            "Beta Industries carries 80 million of short term debt maturing next year. "
            "Liquidity risk remains elevated and the revolver is nearly fully drawn. "
            "The auditors flagged a material weakness in inventory controls. "
        )
        * 12,
        "metadata": {"title": "Beta filing", "period": "FY25"},
    },
    {
        "source_uri": "fixtures/filing-gamma.txt",
        "text": (
            "Gamma Ltd depends on three customers for seventy percent of total sales. "
            "Customer concentration poses a revenue risk if any contract lapses. "
            "Gross margin held at forty percent for the third consecutive year. "
        )
        * 12,
        "metadata": {"title": "Gamma filing", "period": "FY25"},
    },
]


@pytest.fixture
def data_dir(tmp_path, monkeypatch):
    d = tmp_path / "data"
    monkeypatch.setenv("FROAV_DATA_DIR", str(d))
    return d


@pytest.fixture
def platform(data_dir):
    p = Platform(load_config(None))
    yield p
    p.close()


@pytest.fixture
def store(tmp_path):
    s = Store(tmp_path / "entities")
    yield s
    s.close()


def mock_chat_client(name: str = "judge-x", model_id: str | None = None, **params) -> ProviderClient:
    query = "&".join(f"{k}={v}" for k, v in params.items())
    url = "mock://chat" + (f"?{query}" if query else "")
    return ProviderClient(
        ProviderConfig(
            name=name, kind="chat", endpoint_url=url, model_id=model_id or name
        )
    )


def mock_embed_client(name: str = "embedder", dim: int = 64) -> ProviderClient:
    return ProviderClient(
        ProviderConfig(
            name=name,
            kind="embedding",
            endpoint_url=f"mock://embedding?dim={dim}",
            model_id=f"hash-embed-{dim}",
        )
    )


class ScriptedHandler(http.server.BaseHTTPRequestHandler):
    """Serves scripted (status, body) responses and records concurrency."""

    script: list[tuple[int, dict]] = []
    lock = threading.Lock()
    calls = 0
    in_flight = 0
    max_in_flight = 0
    delay_s = 0.0

    def do_POST(self):
        cls = type(self)
        with cls.lock:
            cls.in_flight += 1
            cls.max_in_flight = max(cls.max_in_flight, cls.in_flight)
            index = min(cls.calls, len(cls.script) - 1)
            cls.calls += 1
        try:
            if cls.delay_s:
                import time

                time.sleep(cls.delay_s)
            status, body = cls.script[index]
            data = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        finally:
            with cls.lock:
                cls.in_flight -= 1

    def log_message(self, *args):
        pass


@pytest.fixture
def fake_server():
    """Scripted HTTP server; yields (base_url, handler_class)."""

    class Handler(ScriptedHandler):
        script = [(200, {"text": "ok"})]
        lock = threading.Lock()
        calls = 0
        in_flight = 0
        max_in_flight = 0
        delay_s = 0.0

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", Handler
    server.shutdown()
    thread.join(timeout=5)
