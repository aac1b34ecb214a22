"""Domain model of the mirrored cloud.

Holds the immutable snapshot types (flavours, hypervisors, instances,
projects), the cross-reference validator, and the state differ that turns
two consecutive snapshots into an ordered list of events. Every type
serialises to a canonical JSON document: sorted keys, collections ordered
by id, ids as strings. Canonical bytes are the fixture format, the wire
format, and the basis of all determinism checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any


class VmStatus(str, Enum):
    ACTIVE = "Active"
    SHUTOFF = "Shutoff"
    SUSPENDED = "Suspended"
    BUILDING = "Building"
    MIGRATING = "Migrating"
    ERROR = "Error"


class HostState(str, Enum):
    UP = "Up"
    DOWN = "Down"
    TRANSITIONING = "Transitioning"


class EventKind(str, Enum):
    """Declaration order is the canonical sort order of a diff."""

    INSTANCE_CREATED = "instance-created"
    INSTANCE_DELETED = "instance-deleted"
    POWER_CHANGED = "power-changed"
    MIGRATED = "migrated"
    HOST_STATE_CHANGED = "host-state-changed"
    METERING_CHANGED = "metering-changed"


_KIND_ORDER = {kind: i for i, kind in enumerate(EventKind)}


class SequencingError(Exception):
    """Raised when states are diffed out of poll order."""


def canonical_dumps(doc: Any) -> str:
    """Canonical JSON text: sorted keys, compact separators, ASCII."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class FlavourSpec:
    """Instance sizing template: VCPU count and RAM drive box geometry."""

    id: str
    name: str
    vcpus: int
    ram_mb: int
    disk_gb: int

    def __post_init__(self):
        if self.vcpus < 1:
            raise ValueError(f"flavour {self.id}: vcpus must be >= 1, got {self.vcpus}")
        if self.ram_mb < 1:
            raise ValueError(f"flavour {self.id}: ram_mb must be >= 1, got {self.ram_mb}")
        if self.disk_gb < 0:
            raise ValueError(f"flavour {self.id}: disk_gb must be >= 0, got {self.disk_gb}")

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "vcpus": self.vcpus,
            "ram_mb": self.ram_mb,
            "disk_gb": self.disk_gb,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> FlavourSpec:
        return cls(
            id=str(doc["id"]),
            name=doc["name"],
            vcpus=int(doc["vcpus"]),
            ram_mb=int(doc["ram_mb"]),
            disk_gb=int(doc["disk_gb"]),
        )


@dataclass(frozen=True)
class Hypervisor:
    """A physical compute server; rendered as a gridded plate."""

    id: str
    hostname: str
    vcpus_total: int
    state: HostState
    power_watts: float | None = None

    def __post_init__(self):
        if self.vcpus_total < 1:
            raise ValueError(f"hypervisor {self.id}: vcpus_total must be >= 1")
        if self.power_watts is not None and self.power_watts < 0:
            raise ValueError(f"hypervisor {self.id}: power_watts must be >= 0")

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "hostname": self.hostname,
            "vcpus_total": self.vcpus_total,
            "state": self.state.value,
            "power_watts": self.power_watts,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> Hypervisor:
        watts = doc.get("power_watts")
        return cls(
            id=str(doc["id"]),
            hostname=doc["hostname"],
            vcpus_total=int(doc["vcpus_total"]),
            state=HostState(doc["state"]),
            power_watts=None if watts is None else float(watts),
        )


@dataclass(frozen=True)
class VmInstance:
    """A virtual machine; rendered as a box on its host's plate."""

    id: str
    name: str
    flavour_id: str
    project_id: str
    hypervisor_id: str | None
    status: VmStatus

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "flavour_id": self.flavour_id,
            "project_id": self.project_id,
            "hypervisor_id": self.hypervisor_id,
            "status": self.status.value,
        }

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> VmInstance:
        host = doc.get("hypervisor_id")
        return cls(
            id=str(doc["id"]),
            name=doc["name"],
            flavour_id=str(doc["flavour_id"]),
            project_id=str(doc["project_id"]),
            hypervisor_id=None if host is None else str(host),
            status=VmStatus(doc["status"]),
        )


@dataclass(frozen=True)
class Project:
    """Ownership group; encoded as box colour."""

    id: str
    name: str

    def to_doc(self) -> dict[str, Any]:
        return {"id": self.id, "name": self.name}

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> Project:
        return cls(id=str(doc["id"]), name=doc["name"])


@dataclass(frozen=True)
class CloudState:
    """One validated poll's worth of cloud truth.

    Collections are stored sorted by id so equal states have equal
    canonical serialisations regardless of construction order.
    """

    poll_seq: int
    observed_at: float
    hypervisors: tuple[Hypervisor, ...] = ()
    instances: tuple[VmInstance, ...] = ()
    flavours: tuple[FlavourSpec, ...] = ()
    projects: tuple[Project, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hypervisors", tuple(sorted(self.hypervisors, key=lambda h: h.id)))
        object.__setattr__(self, "instances", tuple(sorted(self.instances, key=lambda i: i.id)))
        object.__setattr__(self, "flavours", tuple(sorted(self.flavours, key=lambda f: f.id)))
        object.__setattr__(self, "projects", tuple(sorted(self.projects, key=lambda p: p.id)))

    def hypervisor(self, hv_id: str) -> Hypervisor | None:
        for h in self.hypervisors:
            if h.id == hv_id:
                return h
        return None

    def instance(self, instance_id: str) -> VmInstance | None:
        for i in self.instances:
            if i.id == instance_id:
                return i
        return None

    def flavour(self, flavour_id: str) -> FlavourSpec | None:
        for f in self.flavours:
            if f.id == flavour_id:
                return f
        return None

    def to_doc(self) -> dict[str, Any]:
        return {
            "poll_seq": self.poll_seq,
            "observed_at": self.observed_at,
            "hypervisors": [h.to_doc() for h in self.hypervisors],
            "instances": [i.to_doc() for i in self.instances],
            "flavours": [f.to_doc() for f in self.flavours],
            "projects": [p.to_doc() for p in self.projects],
        }

    def to_canonical_json(self) -> str:
        return canonical_dumps(self.to_doc())

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> CloudState:
        return cls(
            poll_seq=int(doc["poll_seq"]),
            observed_at=float(doc["observed_at"]),
            hypervisors=tuple(Hypervisor.from_doc(d) for d in doc.get("hypervisors", [])),
            instances=tuple(VmInstance.from_doc(d) for d in doc.get("instances", [])),
            flavours=tuple(FlavourSpec.from_doc(d) for d in doc.get("flavours", [])),
            projects=tuple(Project.from_doc(d) for d in doc.get("projects", [])),
        )


@dataclass(frozen=True)
class CloudEvent:
    """A typed difference between consecutive snapshots."""

    kind: EventKind
    subject_id: str
    before: Any = None
    after: Any = None
    at_seq: int = 0

    def to_doc(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "subject": self.subject_id,
            "before": self.before,
            "after": self.after,
            "at_seq": self.at_seq,
        }


@dataclass(frozen=True)
class Violation:
    """One broken snapshot invariant. Violations are data, not errors."""

    code: str
    entity: str
    entity_id: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code}: {self.entity} {self.entity_id} {self.detail}".rstrip()


def validate(state: CloudState) -> list[Violation]:
    """Report every duplicate-id and unresolved-reference violation.

    An empty report means the snapshot is internally consistent: ids are
    unique per collection, instance flavour/project references resolve,
    and every non-Building instance names a known host.
    """
    out: list[Violation] = []

    def check_unique(entity: str, ids: list[str]):
        seen: set[str] = set()
        for i in ids:
            if i in seen:
                out.append(Violation("duplicate-id", entity, i))
            seen.add(i)

    check_unique("hypervisor", [h.id for h in state.hypervisors])
    check_unique("instance", [i.id for i in state.instances])
    check_unique("flavour", [f.id for f in state.flavours])
    check_unique("project", [p.id for p in state.projects])

    hv_ids = {h.id for h in state.hypervisors}
    flavour_ids = {f.id for f in state.flavours}
    project_ids = {p.id for p in state.projects}

    for inst in state.instances:
        if inst.flavour_id not in flavour_ids:
            out.append(
                Violation("dangling-reference", "instance", inst.id, f"flavour {inst.flavour_id} unknown")
            )
        if inst.project_id not in project_ids:
            out.append(
                Violation("dangling-reference", "instance", inst.id, f"project {inst.project_id} unknown")
            )
        if inst.hypervisor_id is not None and inst.hypervisor_id not in hv_ids:
            out.append(
                Violation(
                    "dangling-reference", "instance", inst.id, f"hypervisor {inst.hypervisor_id} unknown"
                )
            )
        if inst.hypervisor_id is None and inst.status is not VmStatus.BUILDING:
            out.append(Violation("unresolved-host", "instance", inst.id, f"status {inst.status.value}"))

    return out


def _created_payload(inst: VmInstance) -> dict[str, Any]:
    return {"status": inst.status.value, "hypervisor_id": inst.hypervisor_id}


def diff_states(old: CloudState, new: CloudState) -> list[CloudEvent]:
    """Events that explain how `old` became `new`.

    Ordering is deterministic: kind declaration order, then subject id.
    Replaying the instance/host events onto `old` reproduces `new`'s
    topology (who exists, what status, on which host).
    """
    if old.poll_seq >= new.poll_seq:
        raise SequencingError(f"old poll_seq {old.poll_seq} must precede new poll_seq {new.poll_seq}")

    seq = new.poll_seq
    events: list[CloudEvent] = []

    old_inst = {i.id: i for i in old.instances}
    new_inst = {i.id: i for i in new.instances}
    for iid, inst in new_inst.items():
        if iid not in old_inst:
            events.append(CloudEvent(EventKind.INSTANCE_CREATED, iid, after=_created_payload(inst), at_seq=seq))
    for iid, inst in old_inst.items():
        if iid not in new_inst:
            events.append(CloudEvent(EventKind.INSTANCE_DELETED, iid, before=_created_payload(inst), at_seq=seq))
    for iid in old_inst.keys() & new_inst.keys():
        a, b = old_inst[iid], new_inst[iid]
        if a.status is not b.status:
            events.append(
                CloudEvent(EventKind.POWER_CHANGED, iid, before=a.status.value, after=b.status.value, at_seq=seq)
            )
        if a.hypervisor_id != b.hypervisor_id:
            events.append(
                CloudEvent(EventKind.MIGRATED, iid, before=a.hypervisor_id, after=b.hypervisor_id, at_seq=seq)
            )

    old_hv = {h.id: h for h in old.hypervisors}
    new_hv = {h.id: h for h in new.hypervisors}
    for hid, hv in new_hv.items():
        if hid not in old_hv:
            events.append(CloudEvent(EventKind.HOST_STATE_CHANGED, hid, after=hv.state.value, at_seq=seq))
    for hid, hv in old_hv.items():
        if hid not in new_hv:
            events.append(CloudEvent(EventKind.HOST_STATE_CHANGED, hid, before=hv.state.value, at_seq=seq))
    for hid in old_hv.keys() & new_hv.keys():
        a, b = old_hv[hid], new_hv[hid]
        if a.state is not b.state:
            events.append(
                CloudEvent(EventKind.HOST_STATE_CHANGED, hid, before=a.state.value, after=b.state.value, at_seq=seq)
            )
        if a.power_watts != b.power_watts:
            events.append(
                CloudEvent(EventKind.METERING_CHANGED, hid, before=a.power_watts, after=b.power_watts, at_seq=seq)
            )

    events.sort(key=lambda e: (_KIND_ORDER[e.kind], e.subject_id))
    return events
