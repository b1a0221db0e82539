"""A tiny local HTTP server that speaks the model wire contract.

It wraps MockModelClient behind the three POST routes so HttpModelClient and
full CLI runs can be exercised end to end without a real model server.
"""
from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .core import SamplingConfig
from .modelio import MockModelClient

logger = logging.getLogger(__name__)


def _make_handler(client: MockModelClient):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # route request logs through logging
            logger.debug("mock server: " + fmt, *args)

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self) -> None:
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._reply(400, {"error": "malformed JSON body"})
                return
            route = self.path.rstrip("/").rsplit("/", 1)[-1]
            try:
                if route == "complete":
                    sampling = SamplingConfig(
                        n=int(payload.get("n", 1)),
                        temperature=float(payload.get("temperature", 0.0)),
                        top_p=float(payload.get("top_p", 1.0)),
                        max_new_tokens=int(payload.get("max_tokens", 256)),
                        seed=0,
                    )
                    texts = client.complete(payload["prompt"], sampling)
                    self._reply(200, {"choices": [{"text": t} for t in texts]})
                elif route == "score":
                    self._reply(200, {"tokens": client.score(payload["prompt"])})
                elif route == "infill":
                    sampling = SamplingConfig(
                        n=1,
                        temperature=float(payload.get("temperature", 0.0)),
                        top_p=float(payload.get("top_p", 1.0)),
                        max_new_tokens=int(payload.get("max_tokens", 256)),
                        seed=0,
                    )
                    text = client.infill(
                        payload["prefix"], payload.get("suffix", ""), sampling
                    )
                    self._reply(200, {"text": text})
                else:
                    self._reply(404, {"error": f"unknown route {self.path!r}"})
            except (KeyError, TypeError, ValueError) as exc:
                self._reply(400, {"error": str(exc)})

    return Handler


def make_server(
    fixture_path: str | Path, host: str = "127.0.0.1", port: int = 0
) -> tuple[ThreadingHTTPServer, str]:
    """(server, base_url). Port 0 picks a free port; call serve_forever (or
    start_in_thread) afterwards."""
    client = MockModelClient(fixture_path)
    server = ThreadingHTTPServer((host, port), _make_handler(client))
    base_url = f"http://{host}:{server.server_address[1]}"
    return server, base_url


def start_in_thread(
    fixture_path: str | Path, host: str = "127.0.0.1", port: int = 0
) -> tuple[ThreadingHTTPServer, str, threading.Thread]:
    server, base_url = make_server(fixture_path, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, base_url, thread
