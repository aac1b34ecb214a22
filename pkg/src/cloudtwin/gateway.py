"""HTTP boundary between the twin service and its clients.

Endpoints:
  GET  /scene            latest scene snapshot (canonical JSON, plus a
                         staleness flag while polling is failing)
  GET  /events?since=SEQ long-lived server-sent-event stream of cloud
                         and operation-lifecycle events after SEQ
  POST /commands         UI actions (start/stop/migrate/host power)
  GET  /healthz          readiness: 503 until the first successful tick

The stream uses the server-sent-events wire format: one "id: N" line,
one "data: {json}" line, blank-line terminator; comment lines starting
with ":" are heartbeats. If SEQ has already left the retention window
the first frame is a {"kind": "resync"} marker telling the client to
re-fetch /scene before trusting subsequent events.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, urlsplit

from .model import canonical_dumps
from .reconciler import Command, CommandRejected, Reconciler

log = logging.getLogger(__name__)

_REASON_STATUS = {
    "busy": 409,
    "conflict": 409,
    "policy": 409,
    "unknown-subject": 404,
    "invalid-target": 400,
    "malformed": 400,
    "rejected": 400,
    "not-ready": 503,
    "unreachable": 502,
}


class Gateway:
    """Protocol-level request handling, independent of any socket."""

    def __init__(self, reconciler: Reconciler, heartbeat_interval: float = 10.0, retry_after: float = 1.0):
        self.reconciler = reconciler
        self.heartbeat_interval = heartbeat_interval
        self.retry_after = retry_after

    # -- plain JSON endpoints ---------------------------------------------------

    def get_scene(self) -> tuple[int, dict[str, Any]]:
        view = self.reconciler.latest()
        if view is None:
            return 503, {"error": {"reason": "warming", "message": "no snapshot yet"}, "retry_after": self.retry_after}
        doc = view.snapshot.to_doc()
        doc["stale"] = view.stale
        return 200, doc

    def get_healthz(self) -> tuple[int, dict[str, Any]]:
        view = self.reconciler.latest()
        if view is None:
            return 503, {"status": "warming"}
        return 200, {"status": "ready", "stale": view.stale, "at_seq": view.snapshot.at_seq}

    def post_command(self, body: Any) -> tuple[int, dict[str, Any]]:
        if not isinstance(body, dict):
            return 400, {"error": {"reason": "malformed", "message": "body must be a JSON object"}}
        kind = body.get("kind")
        subject = body.get("subject")
        target = body.get("target")
        if not isinstance(kind, str) or not isinstance(subject, str) or subject == "":
            return 400, {"error": {"reason": "malformed", "message": 'body needs string fields "kind" and "subject"'}}
        if target is not None and not isinstance(target, str):
            return 400, {"error": {"reason": "malformed", "message": '"target" must be a string when present'}}
        try:
            op = self.reconciler.submit_command(Command(kind=kind, subject_id=subject, target_hypervisor_id=target))
        except CommandRejected as exc:
            status = _REASON_STATUS.get(exc.reason, 400)
            return status, {"error": {"reason": exc.reason, "message": str(exc)}}
        return 202, op.to_doc()

    # -- event stream -------------------------------------------------------------

    @staticmethod
    def frame(record_seq: int, doc: dict[str, Any]) -> bytes:
        return f"id: {record_seq}\ndata: {canonical_dumps(doc)}\n\n".encode()

    @staticmethod
    def resync_frame() -> bytes:
        doc = {"kind": "resync", "message": "events were discarded; fetch a fresh scene"}
        return f"data: {canonical_dumps(doc)}\n\n".encode()

    HEARTBEAT = b": hb\n\n"


class _GatewayHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    gateway: Gateway
    stopping: threading.Event

    # -- helpers ---------------------------------------------------------------

    def _send_json(self, status: int, doc: dict[str, Any]) -> None:
        payload = canonical_dumps(doc).encode() + b"\n"
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        if status == 503:
            self.send_header("Retry-After", "1")
        self.end_headers()
        self.wfile.write(payload)

    def _read_body(self) -> Any:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return None
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return None

    # -- routing -----------------------------------------------------------------

    def do_GET(self):
        path = urlsplit(self.path).path.rstrip("/") or "/"
        if path == "/scene":
            self._send_json(*self.gateway.get_scene())
        elif path == "/healthz":
            self._send_json(*self.gateway.get_healthz())
        elif path == "/events":
            self._stream_events()
        else:
            self._send_json(404, {"error": {"reason": "no-route", "message": f"no such path {path}"}})

    def do_POST(self):
        path = urlsplit(self.path).path.rstrip("/") or "/"
        if path == "/commands":
            body = self._read_body()
            self._send_json(*self.gateway.post_command(body))
        else:
            self._send_json(404, {"error": {"reason": "no-route", "message": f"no such path {path}"}})

    # -- streaming ------------------------------------------------------------------

    def _stream_events(self):
        query = parse_qs(urlsplit(self.path).query)
        raw_since = query.get("since", ["0"])[0]
        try:
            since = int(raw_since)
        except ValueError:
            self._send_json(400, {"error": {"reason": "malformed", "message": f"since must be an integer, got {raw_since!r}"}})
            return

        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.end_headers()
        self.close_connection = True

        gw = self.gateway
        reconciler = gw.reconciler
        records, resync = reconciler.events_since(since)
        try:
            if resync:
                self.wfile.write(gw.resync_frame())
            last = since
            for record in records:
                self.wfile.write(gw.frame(record.seq, record.doc))
                last = record.seq
            self.wfile.flush()

            idle = 0.0
            step = min(0.25, gw.heartbeat_interval)
            while not self.stopping.is_set():
                if reconciler.wait_for_events(last, timeout=step):
                    records, _ = reconciler.events_since(last)
                    for record in records:
                        self.wfile.write(gw.frame(record.seq, record.doc))
                        last = record.seq
                    self.wfile.flush()
                    idle = 0.0
                    continue
                idle += step
                if idle >= gw.heartbeat_interval:
                    self.wfile.write(gw.HEARTBEAT)
                    self.wfile.flush()
                    idle = 0.0
        except (BrokenPipeError, ConnectionResetError):
            pass  # client went away; nothing to clean up

    def log_message(self, fmt, *args):
        log.debug("gateway httpd: " + fmt, *args)


class GatewayServer:
    """Threaded HTTP server hosting a Gateway; one instance per service."""

    def __init__(self, gateway: Gateway, host: str, port: int):
        self._stopping = threading.Event()
        handler = type(
            "BoundGatewayHandler", (_GatewayHandler,), {"gateway": gateway, "stopping": self._stopping}
        )
        self.server = ThreadingHTTPServer((host, port), handler)
        self.server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server.server_address[:2]
        return str(host), int(port)

    def start(self) -> None:
        self._thread = threading.Thread(target=self.server.serve_forever, name="gateway-httpd", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stopping.set()
        self.server.shutdown()
        self.server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
