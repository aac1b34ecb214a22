"""The twin's heartbeat: poll, diff, retire, rebuild, publish.

Every poll interval the reconciler fetches inventory (and, every k-th
tick, energy metering), diffs the new state against the previous one,
retires pending operations whose goal the observed state now satisfies,
times out operations past their deadline, rebuilds the scene with
blinking flags for still-pending subjects, and publishes the snapshot
plus an ordered event log for streaming clients.

All mutable state is owned by one object guarded by one lock: tick()
and submit_command() are the only writers. Published snapshots are
immutable values; readers never block writers for long.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, replace
from typing import Any

from .clock import Clock
from .client import (
    AuthToken,
    BadRequestError,
    CloudClient,
    CloudClientError,
    ConflictError,
    NotFoundError,
    PolicyError,
    TokenExpiredError,
    VmAction,
)
from .config import ReconcilerSettings
from .layout import SceneConfig, SceneSnapshot, build_scene
from .model import CloudState, HostState, VmStatus, diff_states

log = logging.getLogger(__name__)

OP_KINDS = ("vm-start", "vm-stop", "vm-migrate", "host-on", "host-off")

# how close to expiry a token is still trusted for the next cycle
_TOKEN_MARGIN = 30.0


@dataclass(frozen=True)
class PendingOperation:
    op_id: str
    subject_id: str
    kind: str  # one of OP_KINDS
    issued_at: float
    issued_seq: int
    deadline: float
    target_hypervisor_id: str | None = None

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise ValueError(f"unknown operation kind {self.kind!r}")
        if self.deadline <= self.issued_at:
            raise ValueError("deadline must be after issued_at")

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"op_id": self.op_id, "op_kind": self.kind, "subject": self.subject_id}
        if self.target_hypervisor_id is not None:
            doc["target"] = self.target_hypervisor_id
        return doc


@dataclass(frozen=True)
class Command:
    kind: str  # start | stop | migrate | host-on | host-off
    subject_id: str
    target_hypervisor_id: str | None = None


class CommandRejected(Exception):
    """A command was refused; reason is a stable machine-readable code."""

    def __init__(self, reason: str, message: str):
        self.reason = reason  # busy | unknown-subject | invalid-target | conflict | rejected | policy | not-ready | unreachable | malformed
        super().__init__(message)


@dataclass(frozen=True)
class EventRecord:
    seq: int
    doc: dict[str, Any]


@dataclass(frozen=True)
class PublishedView:
    snapshot: SceneSnapshot
    state: CloudState
    stale: bool
    published_seq: int  # event seq high-water mark at publish time


@dataclass(frozen=True)
class TickResult:
    ok: bool
    events: tuple[EventRecord, ...]
    retired: tuple[PendingOperation, ...]
    timed_out: tuple[PendingOperation, ...]
    snapshot: SceneSnapshot | None
    error: str | None = None


class Reconciler:
    def __init__(
        self,
        client: CloudClient,
        clock: Clock,
        settings: ReconcilerSettings | None = None,
        scene_config: SceneConfig | None = None,
        event_retention: int = 1000,
    ):
        self._client = client
        self._clock = clock
        self._settings = settings or ReconcilerSettings()
        self._scene_config = scene_config or SceneConfig()

        self._lock = threading.RLock()
        self._events_available = threading.Condition(self._lock)
        self._log: deque[EventRecord] = deque(maxlen=event_retention)
        self._event_seq = 0
        self._op_counter = 0
        self._tick_index = 0
        self._poll_seq = 0
        self._consecutive_failures = 0

        self._token: AuthToken | None = None
        self._prev: CloudState | None = None
        self._watts: dict[str, float] = {}
        self._pending: dict[str, PendingOperation] = {}  # keyed by subject_id
        self._published: PublishedView | None = None

    # -- reads ------------------------------------------------------------------

    def latest(self) -> PublishedView | None:
        with self._lock:
            return self._published

    def pending_operations(self) -> list[PendingOperation]:
        with self._lock:
            return sorted(self._pending.values(), key=lambda op: op.op_id)

    def events_since(self, since_seq: int) -> tuple[list[EventRecord], bool]:
        """Events with seq > since_seq, plus whether the caller must resync.

        Resync is signalled when the retention window no longer reaches
        back to since_seq, i.e. some events after it were discarded.
        """
        with self._lock:
            floor = self._log[0].seq if self._log else self._event_seq + 1
            resync = since_seq < floor - 1
            return [r for r in self._log if r.seq > since_seq], resync

    def wait_for_events(self, since_seq: int, timeout: float) -> bool:
        """Block until an event with seq > since_seq exists; False on timeout."""
        with self._events_available:
            return self._events_available.wait_for(lambda: self._event_seq > since_seq, timeout)

    def event_seq(self) -> int:
        with self._lock:
            return self._event_seq

    # -- event plumbing (lock held) ----------------------------------------------

    def _append_event(self, doc: dict[str, Any]) -> EventRecord:
        self._event_seq += 1
        record = EventRecord(seq=self._event_seq, doc=dict(doc))
        self._log.append(record)
        self._events_available.notify_all()
        return record

    # -- authentication ------------------------------------------------------------

    def _fresh_token(self) -> AuthToken:
        token = self._token
        if token is None or token.expires_at <= self._clock.now() + _TOKEN_MARGIN:
            token = self._client.authenticate()
            self._token = token
        return token

    # -- tick ------------------------------------------------------------------------

    def tick(self) -> TickResult:
        """One reconciliation cycle. Returns what changed; never raises for
        cloud-side failures (they surface as a failed TickResult)."""
        with self._lock:
            started = self._clock.now()
            try:
                state = self._fetch_cycle()
            except CloudClientError as exc:
                return self._failed_tick(exc)

            self._consecutive_failures = 0
            self._tick_index += 1

            merged = self._merge_watts(state)
            events: list[EventRecord] = []
            if self._prev is not None:
                for event in diff_states(self._prev, merged):
                    events.append(self._append_event(event.to_doc()))
            self._prev = merged

            retired, timed_out = self._settle_operations(merged)
            for op in retired:
                events.append(
                    self._append_event(
                        {"kind": "op-retired", "at_seq": merged.poll_seq, "outcome": op_outcome(op, merged), **op.to_doc()}
                    )
                )
            for op in timed_out:
                events.append(
                    self._append_event(
                        {
                            "kind": "op-timed-out",
                            "at_seq": merged.poll_seq,
                            "error": f"{op.kind} on {op.subject_id} did not complete before its deadline",
                            **op.to_doc(),
                        }
                    )
                )

            snapshot = build_scene(
                merged,
                readings=self._watts,
                pending_subjects=tuple(self._pending),
                config=self._scene_config,
            )
            self._published = PublishedView(
                snapshot=snapshot, state=merged, stale=False, published_seq=self._event_seq
            )
            duration = self._clock.now() - started
            log.info(
                "tick seq=%d events=%d retired=%d timed_out=%d pending=%d duration=%.3fs",
                merged.poll_seq, len(events), len(retired), len(timed_out), len(self._pending), duration,
            )
            return TickResult(
                ok=True,
                events=tuple(events),
                retired=tuple(retired),
                timed_out=tuple(timed_out),
                snapshot=snapshot,
            )

    def _fetch_cycle(self) -> CloudState:
        self._poll_seq += 1
        try:
            token = self._fresh_token()
            state = self._client.fetch_inventory(token, self._poll_seq)
        except TokenExpiredError:
            # token died between checks; one fresh authentication retry
            self._token = None
            token = self._fresh_token()
            state = self._client.fetch_inventory(token, self._poll_seq)

        if (self._tick_index % self._settings.metering_every) == 0:
            try:
                readings = self._client.fetch_metering(state.hypervisors, token)
            except CloudClientError as exc:
                log.warning("metering fetch failed, keeping previous readings: %s", exc)
            else:
                self._watts = {r.hypervisor_id: r.watts for r in readings}
        return state

    def _failed_tick(self, exc: CloudClientError) -> TickResult:
        self._consecutive_failures += 1
        stale = self._consecutive_failures >= self._settings.staleness_after
        if self._published is not None and self._published.stale != stale:
            self._published = replace(self._published, stale=stale)
        log.warning(
            "tick failed (%d consecutive): %s%s",
            self._consecutive_failures, exc, " [stale]" if stale else "",
        )
        return TickResult(ok=False, events=(), retired=(), timed_out=(), snapshot=None, error=str(exc))

    def _merge_watts(self, state: CloudState) -> CloudState:
        if not self._watts:
            return state
        hypervisors = tuple(
            replace(hv, power_watts=self._watts.get(hv.id)) for hv in state.hypervisors
        )
        return replace(state, hypervisors=hypervisors)

    def _settle_operations(self, state: CloudState) -> tuple[list[PendingOperation], list[PendingOperation]]:
        retired: list[PendingOperation] = []
        timed_out: list[PendingOperation] = []
        now = self._clock.now()
        for op in sorted(self._pending.values(), key=lambda o: o.op_id):
            if _op_goal_met(op, state) or _subject_vanished(op, state):
                retired.append(op)
            elif now > op.deadline:
                timed_out.append(op)
        for op in retired + timed_out:
            del self._pending[op.subject_id]
        return retired, timed_out

    # -- commands -----------------------------------------------------------------

    def submit_command(self, cmd: Command) -> PendingOperation:
        """Validate, forward to the cloud, and register a pending operation.

        Raises CommandRejected with a stable reason code; nothing is
        registered unless the cloud accepted the request.
        """
        with self._lock:
            view = self._published
            if view is None:
                raise CommandRejected("not-ready", "no cloud state observed yet")
            state = view.state
            if cmd.kind not in ("start", "stop", "migrate", "host-on", "host-off"):
                raise CommandRejected("malformed", f"unknown command kind {cmd.kind!r}")
            if cmd.subject_id in self._pending:
                raise CommandRejected("busy", f"{cmd.subject_id} already has operation {self._pending[cmd.subject_id].op_id} in flight")

            if cmd.kind in ("start", "stop", "migrate"):
                op = self._submit_vm_command(cmd, state)
            else:
                op = self._submit_host_command(cmd, state)

            self._pending[op.subject_id] = op
            self._append_event({"kind": "op-accepted", "at_seq": state.poll_seq, **op.to_doc()})
            log.info("accepted %s as %s (subject %s)", cmd.kind, op.op_id, op.subject_id)
            return op

    def _submit_vm_command(self, cmd: Command, state: CloudState) -> PendingOperation:
        instance = state.instance(cmd.subject_id)
        if instance is None:
            raise CommandRejected("unknown-subject", f"no instance {cmd.subject_id}")
        if cmd.kind == "migrate":
            target = state.hypervisor(cmd.target_hypervisor_id or "")
            if target is None:
                raise CommandRejected("invalid-target", f"no hypervisor {cmd.target_hypervisor_id}")
            if instance.hypervisor_id == target.id:
                raise CommandRejected("invalid-target", f"{instance.id} is already on {target.id}")
            action = VmAction.migrate_to(target.hostname)
        elif cmd.kind == "start":
            action = VmAction.start()
        else:
            action = VmAction.stop()

        self._call_cloud(lambda token: self._client.send_vm_action(token, instance.id, action))
        return self._new_operation(
            subject_id=instance.id,
            kind=f"vm-{cmd.kind}",
            timeout=self._settings.timeout_migrate if cmd.kind == "migrate" else self._settings.timeout_power,
            target=cmd.target_hypervisor_id if cmd.kind == "migrate" else None,
        )

    def _submit_host_command(self, cmd: Command, state: CloudState) -> PendingOperation:
        hv = state.hypervisor(cmd.subject_id)
        if hv is None:
            raise CommandRejected("unknown-subject", f"no hypervisor {cmd.subject_id}")
        power_on = cmd.kind == "host-on"
        running = sum(
            1 for i in state.instances if i.hypervisor_id == hv.id and i.status == VmStatus.ACTIVE
        )
        self._call_cloud(
            lambda token: self._client.send_host_action(token, hv, power_on=power_on, running_instances=running)
        )
        return self._new_operation(subject_id=hv.id, kind=cmd.kind, timeout=self._settings.timeout_power)

    def _call_cloud(self, call) -> None:
        try:
            try:
                call(self._fresh_token())
            except TokenExpiredError:
                self._token = None
                call(self._fresh_token())
        except PolicyError as exc:
            raise CommandRejected("policy", str(exc)) from exc
        except ConflictError as exc:
            raise CommandRejected("conflict", str(exc)) from exc
        except NotFoundError as exc:
            raise CommandRejected("unknown-subject", str(exc)) from exc
        except BadRequestError as exc:
            raise CommandRejected("rejected", str(exc)) from exc
        except CloudClientError as exc:
            raise CommandRejected("unreachable", str(exc)) from exc

    def _new_operation(self, subject_id: str, kind: str, timeout: float, target: str | None = None) -> PendingOperation:
        self._op_counter += 1
        now = self._clock.now()
        return PendingOperation(
            op_id=f"op-{self._op_counter:06d}",
            subject_id=subject_id,
            kind=kind,
            issued_at=now,
            issued_seq=self._op_counter,
            deadline=now + timeout,
            target_hypervisor_id=target,
        )

    # -- service loop ----------------------------------------------------------------

    def run(self, stop: threading.Event) -> None:
        """Tick at the configured interval until stop is set (wall-clock mode)."""
        interval = self._settings.poll_interval
        while not stop.is_set():
            started = self._clock.now()
            try:
                self.tick()
            except Exception:
                log.exception("tick crashed; continuing")
            elapsed = self._clock.now() - started
            stop.wait(max(0.0, interval - elapsed))


def _op_goal_met(op: PendingOperation, state: CloudState) -> bool:
    if op.kind in ("vm-start", "vm-stop", "vm-migrate"):
        instance = state.instance(op.subject_id)
        if instance is None:
            return False
        if op.kind == "vm-start":
            return instance.status == VmStatus.ACTIVE
        if op.kind == "vm-stop":
            return instance.status == VmStatus.SHUTOFF
        return instance.hypervisor_id == op.target_hypervisor_id and instance.status == VmStatus.ACTIVE
    hv = state.hypervisor(op.subject_id)
    if hv is None:
        return False
    return hv.state == (HostState.UP if op.kind == "host-on" else HostState.DOWN)


def _subject_vanished(op: PendingOperation, state: CloudState) -> bool:
    if op.kind.startswith("vm-"):
        return state.instance(op.subject_id) is None
    return state.hypervisor(op.subject_id) is None


def op_outcome(op: PendingOperation, state: CloudState) -> str:
    return "subject-vanished" if _subject_vanished(op, state) else "done"
