"""cloudtwin: a live 3D-model twin of an OpenStack-style cluster.

The service polls the cloud's inventory APIs, diffs each observation
against the last, lays the result out as a scene of hypervisor plates
and VM boxes, and serves snapshots, an event stream, and a command
endpoint to visualisation clients.
"""

from .clock import Clock, SystemClock, VirtualClock
from .client import (
    AuthToken,
    ClientOptions,
    CloudClient,
    CloudClientError,
    Credentials,
    EnergyReading,
    HttpTransport,
    InProcessTransport,
    VmAction,
)
from .config import ConfigError, TwinConfig, load_config
from .gateway import Gateway, GatewayServer
from .layout import (
    BoxGeometry,
    GeometryError,
    PlateGeometry,
    SceneConfig,
    SceneSnapshot,
    build_scene,
    energy_shade,
    footprint,
    place_boxes,
    project_colour,
)
from .mockcloud import MockCloud, MockConfig, MockWorld
from .model import (
    CloudEvent,
    CloudState,
    EventKind,
    FlavourSpec,
    HostState,
    Hypervisor,
    Project,
    VmInstance,
    VmStatus,
    canonical_dumps,
    diff_states,
    validate,
)
from .reconciler import Command, CommandRejected, PendingOperation, Reconciler

__version__ = "0.1.0"

__all__ = [
    "AuthToken",
    "BoxGeometry",
    "ClientOptions",
    "Clock",
    "CloudClient",
    "CloudClientError",
    "CloudEvent",
    "CloudState",
    "Command",
    "CommandRejected",
    "ConfigError",
    "Credentials",
    "EnergyReading",
    "EventKind",
    "FlavourSpec",
    "Gateway",
    "GatewayServer",
    "GeometryError",
    "HostState",
    "HttpTransport",
    "Hypervisor",
    "InProcessTransport",
    "MockCloud",
    "MockConfig",
    "MockWorld",
    "PendingOperation",
    "PlateGeometry",
    "Project",
    "Reconciler",
    "SceneConfig",
    "SceneSnapshot",
    "SystemClock",
    "TwinConfig",
    "VirtualClock",
    "VmAction",
    "VmInstance",
    "VmStatus",
    "build_scene",
    "canonical_dumps",
    "diff_states",
    "energy_shade",
    "footprint",
    "load_config",
    "place_boxes",
    "project_colour",
    "validate",
]
