"""Serve the mock suite over the HTTP wire protocol.

Useful for exercising :class:`~mmforge.backends.gateway.HttpTransport`
end to end without a real model server.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .mocks import mock_suite
from .types import StageKind, canonical_json


def _absolutize(reply: dict, asset_dir: Path) -> dict:
    out = dict(reply)
    if "frame_refs" in out:
        out["frame_refs"] = [(asset_dir / r).as_uri() for r in out["frame_refs"]]
    if "audio_ref" in out:
        out["audio_ref"] = (asset_dir / out["audio_ref"]).as_uri()
    return out


class MockServer:
    """Threaded HTTP server answering ``POST /v1/<stage>`` with the seeded mocks.

    Assets land under ``asset_root/<stage>/<request digest>/`` and are
    returned as ``file://`` URLs. ``fail_codes`` lets tests script error
    replies: each entry is popped per request and, when not ``None``, sent
    back as ``{"code": ..., "message": ...}``.
    """

    def __init__(self, asset_root: str | Path, seed: int = 0, host: str = "127.0.0.1", port: int = 0,
                 token: str | None = None):
        self.asset_root = Path(asset_root)
        self.mocks = mock_suite(seed)
        self.token = token
        self.fail_codes: list[int | None] = []
        self.requests: list[tuple[str, dict]] = []
        self._lock = threading.Lock()
        self.httpd = ThreadingHTTPServer((host, port), self._handler())
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # keep test output quiet
                pass

            def _reply(self, code: int, body: dict):
                data = json.dumps(body).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length))
                except ValueError:
                    return self._reply(400, {"code": 400, "message": "body is not JSON"})
                if server.token and self.headers.get("Authorization") != f"Bearer {server.token}":
                    return self._reply(401, {"code": 401, "message": "missing or bad bearer token"})
                if not self.path.startswith("/v1/"):
                    return self._reply(404, {"code": 404, "message": f"no route {self.path}"})
                try:
                    kind = StageKind(self.path[len("/v1/"):])
                except ValueError:
                    return self._reply(404, {"code": 404, "message": f"unknown stage {self.path}"})
                with server._lock:
                    server.requests.append((kind.value, payload))
                    fail = server.fail_codes.pop(0) if server.fail_codes else None
                if fail is not None:
                    return self._reply(fail, {"code": fail, "message": "scripted failure"})
                digest = hashlib.sha256(canonical_json(payload)).hexdigest()[:16]
                asset_dir = server.asset_root / kind.value / digest
                try:
                    reply = server.mocks[kind].handle(payload, asset_dir)
                except (KeyError, TypeError, ValueError) as exc:
                    return self._reply(400, {"code": 400, "message": str(exc)})
                self._reply(200, _absolutize(reply, asset_dir))

        return Handler

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
