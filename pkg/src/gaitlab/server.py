"""Minimal ingest endpoint bridging the phone capture client to the
pipeline.

Serves the capture client's static assets and accepts POSTed raw-capture
JSON at ``/capture``.  Valid documents are stored content-addressed in an
inbox directory (the id is the sha256 of the canonical serialization, so
re-uploads are idempotent and nothing is ever overwritten with different
content).  No computation happens inline.
"""

from __future__ import annotations

import json
from http import HTTPStatus
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .schemas import SchemaError, canonical_dumps, content_hash, validate

MAX_BODY_BYTES = 32 * 1024 * 1024


class CaptureHandler(SimpleHTTPRequestHandler):
    """Static file handler plus the /capture ingest route."""

    inbox: Path = None
    quiet = True

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    def _reply(self, status, doc):
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path.rstrip("/") != "/capture":
            self._reply(HTTPStatus.NOT_FOUND, {"error": "unknown endpoint"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0 or length > MAX_BODY_BYTES:
            self._reply(HTTPStatus.UNPROCESSABLE_ENTITY,
                        {"error": "missing or oversized body", "path": ""})
            return
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            self._reply(HTTPStatus.UNPROCESSABLE_ENTITY,
                        {"error": f"body is not valid JSON: {exc}", "path": ""})
            return
        try:
            validate(doc, "raw_capture")
        except SchemaError as exc:
            self._reply(HTTPStatus.UNPROCESSABLE_ENTITY,
                        {"error": str(exc), "path": exc.path})
            return
        file_id = content_hash(doc)
        target = self.inbox / f"{file_id}.json"
        if not target.exists():
            tmp = target.with_suffix(".tmp")
            tmp.write_text(canonical_dumps(doc), encoding="utf-8")
            tmp.rename(target)
        self._reply(HTTPStatus.OK, {"id": file_id})


def make_server(port, static_dir, inbox_dir):
    """Build the ingest server; call ``serve_forever`` on the result."""
    static_dir = Path(static_dir)
    inbox = Path(inbox_dir)
    inbox.mkdir(parents=True, exist_ok=True)

    class Handler(CaptureHandler):
        pass

    Handler.inbox = inbox

    def _factory(*args, **kwargs):
        return Handler(*args, directory=str(static_dir), **kwargs)

    return ThreadingHTTPServer(("", port), _factory)


def serve(port, static_dir, inbox_dir):
    server = make_server(port, static_dir, inbox_dir)
    host, actual_port = server.server_address[:2]
    print(f"gaitlab ingest listening on port {actual_port}, "
          f"inbox at {inbox_dir}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
