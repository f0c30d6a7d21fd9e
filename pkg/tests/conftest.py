"""Shared fixtures: paths, tiny corpora, and a scripted local HTTP server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from eqk.corpus import ClaimRecord, Dataset

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def tiny_dataset() -> Dataset:
    """Five claims over three articles."""
    records = [
        ClaimRecord("c1", "a1", "Ada Lovelace wrote the first program in 1843.",
                    "ada lovelace first program", "https://example.org/e/ada"),
        ClaimRecord("c2", "a1", "The Menai bridge opened in 1826.",
                    "menai bridge opening", "https://example.org/e/menai"),
        ClaimRecord("c3", "a2", "Mount Kira erupted twice last century.",
                    "mount kira eruptions", "https://example.org/e/kira"),
        ClaimRecord("c4", "a2", "The Tiber flows through Rome.",
                    "tiber river rome", "https://example.org/e/tiber"),
        ClaimRecord("c5", "a3", "Halley's comet returns every 76 years.",
                    "halley comet period", "https://example.org/e/halley"),
    ]
    return Dataset(records=records)


class ScriptedHTTPServer:
    """A local HTTP server that replays queued responses and records requests."""

    def __init__(self) -> None:
        self.responses: list[tuple[int, object]] = []
        self.requests: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def _handle(self) -> None:
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length).decode("utf-8") if length else ""
                outer.requests.append(
                    {
                        "method": self.command,
                        "path": self.path,
                        "headers": dict(self.headers),
                        "body": json.loads(body) if body else None,
                    }
                )
                if outer.responses:
                    status, payload = outer.responses.pop(0)
                else:
                    status, payload = 200, {}
                data = (
                    payload if isinstance(payload, str) else json.dumps(payload)
                ).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            do_GET = _handle
            do_POST = _handle

            def log_message(self, *args) -> None:  # keep test output quiet
                pass

        self._server = HTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/"

    def enqueue(self, status: int, payload: object) -> None:
        self.responses.append((status, payload))

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def http_server():
    server = ScriptedHTTPServer()
    yield server
    server.close()
