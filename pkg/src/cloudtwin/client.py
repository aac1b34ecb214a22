"""HTTP client for the cloud APIs the twin mirrors.

Speaks the OpenStack conventions the service exposes: password auth
returning the token in the X-Subject-Token response header, the four
list endpoints (servers, hypervisors, flavors, projects), the server
action endpoint, and the power-distribution-unit metering/switch
endpoints. Endpoint URLs come from the service catalog unless
overridden.

Transport is pluggable: HttpTransport talks real HTTP via requests,
InProcessTransport calls an embedded simulator directly so tests and
replays run without sockets. Transient failures (5xx, timeouts,
connection errors) are retried with capped exponential backoff.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Protocol
from urllib.parse import urlsplit

import requests

from .clock import Clock, SystemClock
from .mockcloud import MockCloud, MockTimeoutError
from .model import (
    CloudState,
    FlavourSpec,
    HostState,
    Hypervisor,
    Project,
    VmInstance,
    VmStatus,
    validate,
)

log = logging.getLogger(__name__)

_WIRE_TO_STATUS = {
    "ACTIVE": VmStatus.ACTIVE,
    "SHUTOFF": VmStatus.SHUTOFF,
    "SUSPENDED": VmStatus.SUSPENDED,
    "BUILD": VmStatus.BUILDING,
    "MIGRATING": VmStatus.MIGRATING,
    "ERROR": VmStatus.ERROR,
}
_WIRE_TO_HOST_STATE = {
    "up": HostState.UP,
    "down": HostState.DOWN,
    "transitioning": HostState.TRANSITIONING,
}


class CloudClientError(Exception):
    """Base for all client-side cloud errors."""


class TransientError(CloudClientError):
    """Network-level or 5xx failure; safe to retry."""


class BadCredentialsError(CloudClientError):
    """Authentication rejected the configured credentials."""


class TokenExpiredError(CloudClientError):
    """A request was refused because the token is no longer valid."""


class ConflictError(CloudClientError):
    """The cloud rejected an action because of the subject's current state."""


class NotFoundError(CloudClientError):
    """The subject does not exist on the cloud side."""


class BadRequestError(CloudClientError):
    """The cloud rejected the request as malformed or impossible."""


class PolicyError(CloudClientError):
    """A twin-side guard refused the action before any request was sent."""


class FetchError(CloudClientError):
    """Inventory fetch failed; failures maps endpoint name to the reason."""

    def __init__(self, failures: dict[str, str]):
        self.failures = dict(failures)
        detail = ", ".join(f"{name}: {reason}" for name, reason in sorted(failures.items()))
        super().__init__(f"inventory fetch failed ({detail})")


@dataclass(frozen=True)
class Credentials:
    auth_url: str
    username: str
    password: str
    project_name: str
    user_domain: str = "Default"

    def __post_init__(self):
        if not self.auth_url:
            raise ValueError("auth_url must not be empty")


@dataclass(frozen=True)
class AuthToken:
    token: str
    expires_at: float
    catalog: dict[str, str]  # service type -> public endpoint URL


@dataclass(frozen=True)
class EnergyReading:
    hypervisor_id: str
    watts: float
    read_at: float


@dataclass(frozen=True)
class VmAction:
    kind: str  # start | stop | migrate
    target_hostname: str | None = None

    def __post_init__(self):
        if self.kind not in ("start", "stop", "migrate"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == "migrate" and not self.target_hostname:
            raise ValueError("migrate requires a target hostname")
        if self.kind != "migrate" and self.target_hostname is not None:
            raise ValueError(f"{self.kind} takes no target hostname")

    @classmethod
    def start(cls) -> VmAction:
        return cls("start")

    @classmethod
    def stop(cls) -> VmAction:
        return cls("stop")

    @classmethod
    def migrate_to(cls, hostname: str) -> VmAction:
        return cls("migrate", hostname)


@dataclass(frozen=True)
class Response:
    status: int
    headers: dict[str, str]
    body: Any  # decoded JSON, or None for empty bodies


class Transport(Protocol):
    def request(
        self,
        method: str,
        url: str,
        headers: dict[str, str] | None = None,
        json_body: dict[str, Any] | None = None,
        timeout: float = 10.0,
    ) -> Response: ...


class HttpTransport:
    """Real HTTP via a pooled requests session."""

    def __init__(self, session: requests.Session | None = None):
        self._session = session or requests.Session()

    def request(self, method, url, headers=None, json_body=None, timeout=10.0) -> Response:
        try:
            resp = self._session.request(method, url, headers=headers, json=json_body, timeout=timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientError(f"{method} {url}: {exc.__class__.__name__}") from exc
        try:
            body = resp.json() if resp.content else None
        except ValueError:
            body = None
        return Response(resp.status_code, {k.lower(): v for k, v in resp.headers.items()}, body)


class InProcessTransport:
    """Direct calls into an embedded simulator, no sockets involved.

    When a clock is supplied the simulator's virtual time is advanced
    to clock.now() before each request, so simulated transitions track
    whatever clock the rest of the process runs on.
    """

    def __init__(self, mock: MockCloud, clock: Clock | None = None):
        self._mock = mock
        self._clock = clock

    def request(self, method, url, headers=None, json_body=None, timeout=10.0) -> Response:
        path = urlsplit(url).path
        now = self._clock.now() if self._clock is not None else None
        try:
            status, resp_headers, body = self._mock.handle_request(method, path, headers, json_body, now=now)
        except MockTimeoutError as exc:
            raise TransientError(f"{method} {path}: timeout") from exc
        return Response(status, {k.lower(): v for k, v in resp_headers.items()}, body)


@dataclass(frozen=True)
class ClientOptions:
    retry_attempts: int = 2          # extra attempts after the first
    backoff_base: float = 0.1
    backoff_cap: float = 1.0
    request_timeout: float = 10.0
    force_host_off: bool = False
    metering_source: str = "catalog"  # "catalog", an http(s) URL, a file path, or "" to disable
    outlet_by_hostname: dict[str, str] = field(default_factory=dict)
    # explicit endpoint overrides; otherwise resolved from the service catalog
    compute_url: str = ""
    identity_url: str = ""
    metering_url: str = ""


def _parse_expiry(text: str) -> float:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.timestamp()


class CloudClient:
    """One authenticated conversation with the cloud; not concurrency-safe."""

    def __init__(
        self,
        transport: Transport,
        credentials: Credentials,
        options: ClientOptions | None = None,
        clock: Clock | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self._transport = transport
        self._credentials = credentials
        self._options = options or ClientOptions()
        self._clock = clock or SystemClock()
        self._sleep = sleeper

    # -- plumbing -------------------------------------------------------------

    def _request(
        self,
        method: str,
        url: str,
        token: str | None = None,
        body: dict[str, Any] | None = None,
        expect: tuple[int, ...] = (200,),
    ) -> Response:
        headers = {"X-Auth-Token": token} if token else {}
        attempts = 1 + max(0, self._options.retry_attempts)
        last_exc: TransientError | None = None
        for attempt in range(attempts):
            if attempt:
                delay = min(self._options.backoff_cap, self._options.backoff_base * (2 ** (attempt - 1)))
                self._sleep(delay)
            try:
                resp = self._transport.request(
                    method, url, headers=headers, json_body=body, timeout=self._options.request_timeout
                )
            except TransientError as exc:
                last_exc = exc
                log.debug("transient failure on %s %s (attempt %d/%d): %s", method, url, attempt + 1, attempts, exc)
                continue
            if resp.status >= 500:
                last_exc = TransientError(f"{method} {url}: HTTP {resp.status}")
                log.debug("server error on %s %s (attempt %d/%d)", method, url, attempt + 1, attempts)
                continue
            if resp.status in expect:
                return resp
            raise self._status_error(resp, token_present=token is not None)
        assert last_exc is not None
        raise last_exc

    @staticmethod
    def _status_error(resp: Response, token_present: bool) -> CloudClientError:
        message = ""
        if isinstance(resp.body, dict):
            message = str(resp.body.get("error", {}).get("message", ""))
        if resp.status == 401:
            return TokenExpiredError(message or "token rejected") if token_present else BadCredentialsError(
                message or "credentials rejected"
            )
        if resp.status == 404:
            return NotFoundError(message or "not found")
        if resp.status == 409:
            return ConflictError(message or "conflict")
        if resp.status == 400:
            return BadRequestError(message or "bad request")
        return CloudClientError(f"unexpected HTTP {resp.status}: {message}")

    def _endpoint(self, token: AuthToken, service: str, override: str) -> str:
        if override:
            return override.rstrip("/")
        url = token.catalog.get(service, "")
        if not url:
            raise CloudClientError(f"service catalog has no {service!r} endpoint and none configured")
        return url.rstrip("/")

    # -- operations -----------------------------------------------------------

    def authenticate(self) -> AuthToken:
        creds = self._credentials
        body = {
            "auth": {
                "identity": {
                    "methods": ["password"],
                    "password": {
                        "user": {
                            "name": creds.username,
                            "domain": {"name": creds.user_domain},
                            "password": creds.password,
                        }
                    },
                },
                "scope": {"project": {"name": creds.project_name, "domain": {"name": creds.user_domain}}},
            }
        }
        url = creds.auth_url.rstrip("/") + "/auth/tokens"
        resp = self._request("POST", url, body=body, expect=(201, 200))
        token = resp.headers.get("x-subject-token", "")
        if not token:
            raise CloudClientError("auth response carried no X-Subject-Token header")
        doc = resp.body or {}
        token_doc = doc.get("token", {})
        try:
            expires_at = _parse_expiry(token_doc["expires_at"])
        except (KeyError, ValueError) as exc:
            raise CloudClientError(f"auth response has no usable expiry: {exc}") from exc
        catalog: dict[str, str] = {}
        for service in token_doc.get("catalog", []):
            for endpoint in service.get("endpoints", []):
                if endpoint.get("interface") == "public":
                    catalog[service["type"]] = endpoint["url"]
                    break
        return AuthToken(token=token, expires_at=expires_at, catalog=catalog)

    def fetch_inventory(self, token: AuthToken, poll_seq: int) -> CloudState:
        compute = self._endpoint(token, "compute", self._options.compute_url)
        identity = self._endpoint(token, "identity", self._options.identity_url)
        plan = {
            "servers": compute + "/servers/detail",
            "hypervisors": compute + "/os-hypervisors/detail",
            "flavors": compute + "/flavors/detail",
            "projects": identity + "/projects",
        }
        docs: dict[str, Any] = {}
        failures: dict[str, str] = {}
        for name, url in plan.items():
            try:
                docs[name] = self._request("GET", url, token=token.token).body
            except TokenExpiredError:
                raise
            except CloudClientError as exc:
                failures[name] = str(exc)
        if failures:
            raise FetchError(failures)

        hypervisors = []
        hostname_to_id: dict[str, str] = {}
        for doc in docs["hypervisors"].get("hypervisors", []):
            hv_id = str(doc["id"])
            state = _WIRE_TO_HOST_STATE.get(str(doc.get("state", "")).lower())
            if state is None:
                log.warning("hypervisor %s reports unknown state %r; treating as down", hv_id, doc.get("state"))
                state = HostState.DOWN
            hostname = doc["hypervisor_hostname"]
            hostname_to_id[hostname] = hv_id
            hypervisors.append(
                Hypervisor(id=hv_id, hostname=hostname, vcpus_total=int(doc["vcpus"]), state=state)
            )

        instances = []
        for doc in docs["servers"].get("servers", []):
            status = _WIRE_TO_STATUS.get(str(doc.get("status", "")).upper())
            if status is None:
                log.warning("server %s reports unknown status %r; treating as error", doc["id"], doc.get("status"))
                status = VmStatus.ERROR
            hostname = doc.get("OS-EXT-SRV-ATTR:hypervisor_hostname")
            instances.append(
                VmInstance(
                    id=str(doc["id"]),
                    name=doc.get("name", str(doc["id"])),
                    flavour_id=str(doc["flavor"]["id"]),
                    project_id=str(doc["tenant_id"]),
                    hypervisor_id=hostname_to_id.get(hostname) if hostname else None,
                    status=status,
                )
            )

        flavours = [
            FlavourSpec(
                id=str(doc["id"]),
                name=doc["name"],
                vcpus=int(doc["vcpus"]),
                ram_mb=int(doc["ram"]),
                disk_gb=int(doc["disk"]),
            )
            for doc in docs["flavors"].get("flavors", [])
        ]
        projects = [Project(id=str(doc["id"]), name=doc["name"]) for doc in docs["projects"].get("projects", [])]

        state = CloudState(
            poll_seq=poll_seq,
            observed_at=self._clock.now(),
            hypervisors=tuple(hypervisors),
            instances=tuple(instances),
            flavours=tuple(flavours),
            projects=tuple(projects),
        )
        violations = validate(state)
        if violations:
            raise FetchError({"consistency": "; ".join(v.detail for v in violations)})
        return state

    def send_vm_action(self, token: AuthToken, instance_id: str, action: VmAction) -> None:
        compute = self._endpoint(token, "compute", self._options.compute_url)
        url = f"{compute}/servers/{instance_id}/action"
        if action.kind == "start":
            body: dict[str, Any] = {"os-start": None}
        elif action.kind == "stop":
            body = {"os-stop": None}
        else:
            body = {"os-migrateLive": {"host": action.target_hostname, "block_migration": "auto"}}
        try:
            self._request("POST", url, token=token.token, body=body, expect=(202,))
        except BadRequestError:
            if action.kind != "migrate":
                raise
            # live migration refused; fall back to a cold migration request
            log.info("live migration rejected for %s; retrying as cold migration", instance_id)
            cold = {"migrate": {"host": action.target_hostname}}
            self._request("POST", url, token=token.token, body=cold, expect=(202,))

    def send_host_action(
        self, token: AuthToken, hypervisor: Hypervisor, power_on: bool, running_instances: int = 0
    ) -> None:
        if not power_on and running_instances > 0 and not self._options.force_host_off:
            raise PolicyError(
                f"refusing to power off {hypervisor.hostname}: {running_instances} running instance(s) "
                "(set force_host_off to override)"
            )
        outlet = self._options.outlet_by_hostname.get(hypervisor.hostname)
        if not outlet:
            raise BadRequestError(f"no outlet mapped for host {hypervisor.hostname}")
        base = self._metering_base(token)
        if base is None:
            raise BadRequestError("no metering endpoint configured; cannot switch host power")
        url = f"{base}/outlets/{outlet}/switch"
        self._request("POST", url, token=token.token, body={"on": power_on}, expect=(202,))

    def _metering_base(self, token: AuthToken | None) -> str | None:
        source = self._options.metering_source
        if self._options.metering_url:
            return self._options.metering_url.rstrip("/")
        if source == "catalog":
            if token is None:
                return None
            return token.catalog.get("metering", "").rstrip("/") or None
        if source.startswith("http://") or source.startswith("https://"):
            return source.rstrip("/")
        return None

    def fetch_metering(
        self, hypervisors: tuple[Hypervisor, ...] | list[Hypervisor], token: AuthToken | None = None
    ) -> list[EnergyReading]:
        """Read outlet wattage and resolve it to hypervisors via the outlet map.

        Outlets not mapped to a known host are ignored (logged at debug).
        Raises TransientError when the configured source is unreachable.
        """
        source = self._options.metering_source
        if not source:
            return []
        base = self._metering_base(token)
        if base is not None:
            resp = self._request("GET", base + "/metering", token=token.token if token else None)
            doc = resp.body or {}
        elif source == "catalog":
            # catalog-sourced metering but the catalog offers none: metering is simply absent
            log.debug("service catalog has no metering endpoint; skipping energy readings")
            return []
        else:
            path = Path(source[len("file:"):] if source.startswith("file:") else source)
            try:
                doc = json.loads(path.read_text())
            except OSError as exc:
                raise TransientError(f"metering source unreadable: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise TransientError(f"metering source malformed: {exc}") from exc

        hostname_for_outlet = {outlet: host for host, outlet in self._options.outlet_by_hostname.items()}
        by_hostname = {hv.hostname: hv for hv in hypervisors}
        readings = []
        now = self._clock.now()
        for entry in doc.get("outlets", []):
            name = entry.get("name", "")
            hostname = hostname_for_outlet.get(name) or entry.get("host")
            if hostname is None:
                log.debug("metering outlet %s has no host mapping; skipped", name)
                continue
            hv = by_hostname.get(hostname)
            if hv is None:
                log.debug("metering outlet %s maps to unknown host %s; skipped", name, hostname)
                continue
            readings.append(EnergyReading(hypervisor_id=hv.id, watts=float(entry["watts"]), read_at=now))
        readings.sort(key=lambda r: r.hypervisor_id)
        return readings
