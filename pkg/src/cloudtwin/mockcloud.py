"""Deterministic simulator of the cloud APIs the twin consumes.

Implements just enough of the Keystone/Nova surface (token issue, the
four list endpoints, the server action endpoint) plus the metering and
outlet-switch endpoints to stand in for a real cluster. Power and
migration transitions take configurable simulated seconds on an
injected virtual clock, so tests run instantly and every trace is
reproducible byte for byte: token ids are counters, all listings are
id-sorted, and transitions complete in deterministic order.

Runs in-process (handle_request called directly) or as a standalone
HTTP service for demos and UI development.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path
from typing import Any

from .model import CloudState, HostState, VmStatus

log = logging.getLogger(__name__)

# wire names follow the OpenStack compute API
_STATUS_TO_WIRE = {
    VmStatus.ACTIVE.value: "ACTIVE",
    VmStatus.SHUTOFF.value: "SHUTOFF",
    VmStatus.SUSPENDED.value: "SUSPENDED",
    VmStatus.BUILDING.value: "BUILD",
    VmStatus.MIGRATING.value: "MIGRATING",
    VmStatus.ERROR.value: "ERROR",
}
_HOST_STATE_TO_WIRE = {
    HostState.UP.value: "up",
    HostState.DOWN.value: "down",
    HostState.TRANSITIONING.value: "transitioning",
}

AUTH_PATH = "/identity/v3/auth/tokens"
PROJECTS_PATH = "/identity/v3/projects"
SERVERS_PATH = "/compute/v2.1/servers/detail"
HYPERVISORS_PATH = "/compute/v2.1/os-hypervisors/detail"
FLAVORS_PATH = "/compute/v2.1/flavors/detail"
ACTION_PREFIX = "/compute/v2.1/servers/"
METERING_PATH = "/epdu/v1/metering"
SWITCH_PREFIX = "/epdu/v1/outlets/"

DOWN_HOST_WATTS = 0.0


class MockTimeoutError(Exception):
    """Injected network timeout; transports surface it as transient."""


def bundled_fixture(name: str) -> dict[str, Any]:
    """Load one of the JSON fixtures shipped with the package."""
    with resources.files("cloudtwin.fixtures").joinpath(name).open("r") as fh:
        return json.load(fh)


@dataclass
class FaultRule:
    endpoint: str        # auth|projects|servers|hypervisors|flavors|action|metering|switch
    behaviour: str       # http-500 | timeout | stall
    count: int = 1


@dataclass
class MockConfig:
    fixture: dict[str, Any] | str | Path | None = None
    metering: dict[str, Any] | str | Path | None = None
    transition_delay_power: float = 2.0
    transition_delay_migrate: float = 3.0
    token_ttl: float = 3600.0
    username: str = "admin"
    password: str = "secret"
    base_url: str = "inproc://mock"
    live_migration_supported: bool = True
    faults: list[FaultRule] = field(default_factory=list)

    def __post_init__(self):
        if self.transition_delay_power < 0 or self.transition_delay_migrate < 0:
            raise ValueError("transition delays must be >= 0")
        if self.token_ttl <= 0:
            raise ValueError("token_ttl must be > 0")


def _load_doc(source: dict[str, Any] | str | Path | None, default_name: str) -> dict[str, Any]:
    if source is None:
        return bundled_fixture(default_name)
    if isinstance(source, dict):
        return source
    return json.loads(Path(source).read_text())


@dataclass
class _Transition:
    subject_kind: str    # instance | host
    subject_id: str
    op: str              # start | stop | migrate | power-on | power-off
    deadline: float
    target_hv: str | None = None


class MockWorld:
    """Mutable entity store mirroring the twin's snapshot shapes."""

    def __init__(self, fixture_doc: dict[str, Any]):
        state = CloudState.from_doc(fixture_doc)
        self.hypervisors = {h.id: dict(h.to_doc()) for h in state.hypervisors}
        self.instances = {i.id: dict(i.to_doc()) for i in state.instances}
        self.flavours = {f.id: dict(f.to_doc()) for f in state.flavours}
        self.projects = {p.id: dict(p.to_doc()) for p in state.projects}
        self.transitions: list[_Transition] = []

    def transition_for(self, subject_id: str) -> _Transition | None:
        for t in self.transitions:
            if t.subject_id == subject_id:
                return t
        return None

    def hv_by_hostname(self, hostname: str) -> dict[str, Any] | None:
        for hv in self.hypervisors.values():
            if hv["hostname"] == hostname:
                return hv
        return None

    def to_cloud_state(self, poll_seq: int, observed_at: float) -> CloudState:
        return CloudState.from_doc(
            {
                "poll_seq": poll_seq,
                "observed_at": observed_at,
                "hypervisors": sorted(self.hypervisors.values(), key=lambda d: d["id"]),
                "instances": sorted(self.instances.values(), key=lambda d: d["id"]),
                "flavours": sorted(self.flavours.values(), key=lambda d: d["id"]),
                "projects": sorted(self.projects.values(), key=lambda d: d["id"]),
            }
        )


class MockCloud:
    """The simulator: HTTP-shaped request handling over a MockWorld."""

    def __init__(self, config: MockConfig | None = None):
        self.config = config or MockConfig()
        self.world = MockWorld(_load_doc(self.config.fixture, "f1.json"))
        metering_doc = _load_doc(self.config.metering, "f1_metering.json")
        self.outlets: list[dict[str, Any]] = [dict(o) for o in metering_doc.get("outlets", [])]
        self.now = 0.0
        self._token_counter = 0
        self._tokens: dict[str, float] = {}
        self._lock = threading.RLock()

    # -- fixture ops (the only way instance count may change) --------------

    def create_instance(self, doc: dict[str, Any]) -> None:
        with self._lock:
            if doc["id"] in self.world.instances:
                raise ValueError(f"instance {doc['id']} already exists")
            self.world.instances[doc["id"]] = {
                "id": doc["id"],
                "name": doc.get("name", doc["id"]),
                "flavour_id": doc["flavour_id"],
                "project_id": doc["project_id"],
                "hypervisor_id": doc.get("hypervisor_id"),
                "status": doc.get("status", VmStatus.ACTIVE.value),
            }

    def delete_instance(self, instance_id: str) -> None:
        with self._lock:
            self.world.instances.pop(instance_id, None)
            self.world.transitions = [t for t in self.world.transitions if t.subject_id != instance_id]

    def add_fault(self, endpoint: str, behaviour: str, count: int = 1) -> None:
        with self._lock:
            self.config.faults.append(FaultRule(endpoint, behaviour, count))

    # -- clock --------------------------------------------------------------

    def advance_clock(self, dt: float) -> list[_Transition]:
        """Move simulated time forward, completing due transitions."""
        if dt < 0:
            raise ValueError("dt must be >= 0")
        with self._lock:
            self.now += dt
            due = [t for t in self.world.transitions if t.deadline <= self.now]
            due.sort(key=lambda t: (t.deadline, t.subject_id))
            for t in due:
                self._complete(t)
                self.world.transitions.remove(t)
            return due

    def _complete(self, t: _Transition) -> None:
        if t.subject_kind == "instance":
            inst = self.world.instances.get(t.subject_id)
            if inst is None:
                return
            if t.op == "stop":
                inst["status"] = VmStatus.SHUTOFF.value
            elif t.op == "start":
                inst["status"] = VmStatus.ACTIVE.value
            elif t.op == "migrate":
                inst["hypervisor_id"] = t.target_hv
                inst["status"] = VmStatus.ACTIVE.value
        else:
            hv = self.world.hypervisors.get(t.subject_id)
            if hv is None:
                return
            if t.op == "power-off":
                hv["state"] = HostState.DOWN.value
                for inst in self.world.instances.values():
                    if inst["hypervisor_id"] == t.subject_id and inst["status"] == VmStatus.ACTIVE.value:
                        inst["status"] = VmStatus.SHUTOFF.value
            elif t.op == "power-on":
                hv["state"] = HostState.UP.value

    # -- request handling ----------------------------------------------------

    def handle_request(
        self,
        method: str,
        path: str,
        headers: dict[str, str] | None = None,
        body: dict[str, Any] | None = None,
        now: float | None = None,
    ) -> tuple[int, dict[str, str], dict[str, Any] | None]:
        with self._lock:
            if now is not None and now > self.now:
                self.advance_clock(now - self.now)
            headers = {k.lower(): v for k, v in (headers or {}).items()}
            path = path.split("?", 1)[0].rstrip("/") or "/"

            endpoint, extra = self._route(method, path)
            if endpoint is None:
                return self._error(404, f"no such endpoint: {method} {path}")

            fault = self._pop_fault(endpoint)
            if fault == "http-500":
                return self._error(500, f"injected fault on {endpoint}")
            if fault == "timeout":
                raise MockTimeoutError(f"injected timeout on {endpoint}")

            if endpoint != "auth":
                token = headers.get("x-auth-token")
                if token not in self._tokens:
                    return self._error(401, "authentication required")
                if self._tokens[token] <= self.now:
                    return self._error(401, "token expired")

            if endpoint == "auth":
                return self._handle_auth(body or {})
            if endpoint == "projects":
                return self._ok({"projects": sorted(self.world.projects.values(), key=lambda d: d["id"])})
            if endpoint == "servers":
                return self._ok({"servers": self._servers_doc()})
            if endpoint == "hypervisors":
                return self._ok({"hypervisors": self._hypervisors_doc()})
            if endpoint == "flavors":
                return self._ok({"flavors": self._flavors_doc()})
            if endpoint == "action":
                return self._handle_action(extra, body or {}, stall=(fault == "stall"))
            if endpoint == "metering":
                return self._ok({"outlets": self._metering_doc()})
            if endpoint == "switch":
                return self._handle_switch(extra, body or {}, stall=(fault == "stall"))
            return self._error(404, f"no such endpoint: {method} {path}")

    def _route(self, method: str, path: str) -> tuple[str | None, str]:
        if method == "POST" and path == AUTH_PATH:
            return "auth", ""
        if method == "GET" and path == PROJECTS_PATH:
            return "projects", ""
        if method == "GET" and path == SERVERS_PATH:
            return "servers", ""
        if method == "GET" and path == HYPERVISORS_PATH:
            return "hypervisors", ""
        if method == "GET" and path == FLAVORS_PATH:
            return "flavors", ""
        if method == "POST" and path.startswith(ACTION_PREFIX) and path.endswith("/action"):
            return "action", path[len(ACTION_PREFIX):-len("/action")]
        if method == "GET" and path == METERING_PATH:
            return "metering", ""
        if method == "POST" and path.startswith(SWITCH_PREFIX) and path.endswith("/switch"):
            return "switch", path[len(SWITCH_PREFIX):-len("/switch")]
        return None, ""

    def _pop_fault(self, endpoint: str) -> str | None:
        for rule in self.config.faults:
            if rule.endpoint == endpoint and rule.count > 0:
                rule.count -= 1
                return rule.behaviour
        return None

    # -- endpoint bodies ------------------------------------------------------

    def _handle_auth(self, body: dict[str, Any]) -> tuple[int, dict[str, str], dict[str, Any]]:
        try:
            user = body["auth"]["identity"]["password"]["user"]
            name, password = user["name"], user["password"]
        except (KeyError, TypeError):
            return self._error(400, "malformed auth request")
        if name != self.config.username or password != self.config.password:
            return self._error(401, "invalid credentials")
        self._token_counter += 1
        token = f"tok-{self._token_counter:06d}"
        expires = self.now + self.config.token_ttl
        self._tokens[token] = expires
        base = self.config.base_url.rstrip("/")
        catalog = [
            {
                "type": "identity",
                "name": "keystone",
                "endpoints": [{"interface": "public", "url": base + "/identity/v3"}],
            },
            {
                "type": "compute",
                "name": "nova",
                "endpoints": [{"interface": "public", "url": base + "/compute/v2.1"}],
            },
            {
                "type": "metering",
                "name": "epdu",
                "endpoints": [{"interface": "public", "url": base + "/epdu/v1"}],
            },
        ]
        expires_iso = datetime.fromtimestamp(expires, tz=timezone.utc).isoformat()
        return (
            201,
            {"Content-Type": "application/json", "X-Subject-Token": token},
            {"token": {"expires_at": expires_iso, "catalog": catalog}},
        )

    def _servers_doc(self) -> list[dict[str, Any]]:
        out = []
        for inst in sorted(self.world.instances.values(), key=lambda d: d["id"]):
            hv = self.world.hypervisors.get(inst["hypervisor_id"]) if inst["hypervisor_id"] else None
            out.append(
                {
                    "id": inst["id"],
                    "name": inst["name"],
                    "status": _STATUS_TO_WIRE[inst["status"]],
                    "flavor": {"id": inst["flavour_id"]},
                    "tenant_id": inst["project_id"],
                    "OS-EXT-SRV-ATTR:hypervisor_hostname": hv["hostname"] if hv else None,
                }
            )
        return out

    def _hypervisors_doc(self) -> list[dict[str, Any]]:
        return [
            {
                "id": hv["id"],
                "hypervisor_hostname": hv["hostname"],
                "vcpus": hv["vcpus_total"],
                "state": _HOST_STATE_TO_WIRE[hv["state"]],
                "status": "enabled",
            }
            for hv in sorted(self.world.hypervisors.values(), key=lambda d: d["id"])
        ]

    def _flavors_doc(self) -> list[dict[str, Any]]:
        return [
            {
                "id": f["id"],
                "name": f["name"],
                "vcpus": f["vcpus"],
                "ram": f["ram_mb"],
                "disk": f["disk_gb"],
            }
            for f in sorted(self.world.flavours.values(), key=lambda d: d["id"])
        ]

    def _metering_doc(self) -> list[dict[str, Any]]:
        out = []
        for outlet in sorted(self.outlets, key=lambda o: o["name"]):
            watts = float(outlet["watts"])
            hv = self.world.hv_by_hostname(outlet.get("host", "")) if outlet.get("host") else None
            if hv is not None and hv["state"] == HostState.DOWN.value:
                watts = DOWN_HOST_WATTS
            out.append({"name": outlet["name"], "watts": watts})
        return out

    def _handle_action(
        self, instance_id: str, body: dict[str, Any], stall: bool
    ) -> tuple[int, dict[str, str], dict[str, Any] | None]:
        inst = self.world.instances.get(instance_id)
        if inst is None:
            return self._error(404, f"instance {instance_id} not found")
        if self.world.transition_for(instance_id) is not None:
            return self._error(409, f"instance {instance_id} has an operation in progress")

        if "os-start" in body:
            if inst["status"] != VmStatus.SHUTOFF.value:
                return self._error(409, f"cannot start instance in status {inst['status']}")
            self.world.transitions.append(
                _Transition("instance", instance_id, "start", self._deadline("power", stall))
            )
            return self._accepted()
        if "os-stop" in body:
            if inst["status"] != VmStatus.ACTIVE.value:
                return self._error(409, f"cannot stop instance in status {inst['status']}")
            self.world.transitions.append(
                _Transition("instance", instance_id, "stop", self._deadline("power", stall))
            )
            return self._accepted()
        if "os-migrateLive" in body or "migrate" in body:
            if "os-migrateLive" in body and not self.config.live_migration_supported:
                return self._error(400, "live migration not supported")
            params = body.get("os-migrateLive") or body.get("migrate") or {}
            target = self.world.hv_by_hostname(params.get("host", ""))
            if target is None:
                return self._error(400, f"unknown target host {params.get('host')!r}")
            if target["id"] == inst["hypervisor_id"]:
                return self._error(400, "instance is already on the requested host")
            if inst["status"] != VmStatus.ACTIVE.value:
                return self._error(409, f"cannot migrate instance in status {inst['status']}")
            inst["status"] = VmStatus.MIGRATING.value
            self.world.transitions.append(
                _Transition(
                    "instance", instance_id, "migrate", self._deadline("migrate", stall), target_hv=target["id"]
                )
            )
            return self._accepted()
        return self._error(400, f"unsupported action body: {sorted(body)}")

    def _deadline(self, kind: str, stall: bool) -> float:
        if stall:
            return math.inf
        delay = self.config.transition_delay_migrate if kind == "migrate" else self.config.transition_delay_power
        return self.now + delay

    def _handle_switch(
        self, outlet_name: str, body: dict[str, Any], stall: bool = False
    ) -> tuple[int, dict[str, str], dict[str, Any] | None]:
        outlet = next((o for o in self.outlets if o["name"] == outlet_name), None)
        if outlet is None:
            return self._error(404, f"outlet {outlet_name} not found")
        hv = self.world.hv_by_hostname(outlet.get("host", "")) if outlet.get("host") else None
        if hv is None:
            return self._error(404, f"outlet {outlet_name} is not wired to a known host")
        if "on" not in body or not isinstance(body["on"], bool):
            return self._error(400, 'switch body must be {"on": true|false}')
        want_on = body["on"]
        if self.world.transition_for(hv["id"]) is not None:
            return self._error(409, f"host {hv['hostname']} is already transitioning")
        if want_on and hv["state"] == HostState.UP.value:
            return self._error(409, f"host {hv['hostname']} is already up")
        if not want_on and hv["state"] == HostState.DOWN.value:
            return self._error(409, f"host {hv['hostname']} is already down")
        hv["state"] = HostState.TRANSITIONING.value
        self.world.transitions.append(
            _Transition("host", hv["id"], "power-on" if want_on else "power-off", self._deadline("power", stall))
        )
        return self._accepted()

    # -- response helpers ------------------------------------------------------

    @staticmethod
    def _ok(doc: dict[str, Any]) -> tuple[int, dict[str, str], dict[str, Any]]:
        return 200, {"Content-Type": "application/json"}, doc

    @staticmethod
    def _accepted() -> tuple[int, dict[str, str], None]:
        return 202, {"Content-Type": "application/json"}, None

    @staticmethod
    def _error(status: int, message: str) -> tuple[int, dict[str, str], dict[str, Any]]:
        return status, {"Content-Type": "application/json"}, {"error": {"code": status, "message": message}}


class _MockHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    mock: MockCloud
    wall_clock = None

    def _dispatch(self, method: str):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        body = None
        if raw:
            try:
                body = json.loads(raw)
            except json.JSONDecodeError:
                body = None
        now = self.wall_clock.now() if self.wall_clock else None
        try:
            status, headers, doc = self.mock.handle_request(
                method, self.path, dict(self.headers.items()), body, now=now
            )
        except MockTimeoutError:
            # injected timeout: drop the connection without a response
            self.close_connection = True
            return
        payload = b"" if doc is None else json.dumps(doc).encode()
        self.send_response(status)
        for k, v in headers.items():
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        if payload:
            self.wfile.write(payload)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def log_message(self, fmt, *args):
        log.debug("mock httpd: " + fmt, *args)


def serve_mock(mock: MockCloud, host: str, port: int, wall_clock=None) -> ThreadingHTTPServer:
    """Expose a MockCloud over HTTP; returns the (started) server.

    When wall_clock is given, every request first advances the mock's
    virtual time to the clock's now, so transitions complete in real
    time for interactive use.
    """
    handler = type("BoundMockHandler", (_MockHandler,), {"mock": mock, "wall_clock": wall_clock})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, name="mock-httpd", daemon=True)
    thread.start()
    return server
