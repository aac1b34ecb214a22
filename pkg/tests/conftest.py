from __future__ import annotations

from dataclasses import dataclass

import pytest

from cloudtwin.clock import VirtualClock
from cloudtwin.client import ClientOptions, CloudClient, Credentials, InProcessTransport
from cloudtwin.config import ReconcilerSettings
from cloudtwin.layout import SceneConfig
from cloudtwin.mockcloud import FaultRule, MockCloud, MockConfig, bundled_fixture
from cloudtwin.model import CloudState
from cloudtwin.reconciler import Reconciler

MOCK_AUTH_URL = "inproc://mock/identity/v3"


@pytest.fixture
def f1_doc() -> dict:
    return bundled_fixture("f1.json")


@pytest.fixture
def f1_state(f1_doc) -> CloudState:
    return CloudState.from_doc(f1_doc)


@pytest.fixture
def flavours_doc() -> dict:
    return bundled_fixture("default_flavours.json")


@dataclass
class Rig:
    """A complete virtual-clock twin: simulator, client, reconciler."""

    clock: VirtualClock
    mock: MockCloud
    client: CloudClient
    reconciler: Reconciler

    def run_ticks(self, count: int, step: float = 1.0) -> list:
        """Advance the clock and tick `count` times; returns the TickResults."""
        results = []
        for _ in range(count):
            self.clock.advance(step)
            results.append(self.reconciler.tick())
        return results


def build_rig(
    fixture: dict | None = None,
    metering: dict | None = None,
    delay_power: float = 2.0,
    delay_migrate: float = 3.0,
    token_ttl: float = 3600.0,
    settings: ReconcilerSettings | None = None,
    scene: SceneConfig | None = None,
    faults: list[FaultRule] | None = None,
    event_retention: int = 1000,
    password: str = "secret",
) -> Rig:
    clock = VirtualClock(0.0)
    mock = MockCloud(
        MockConfig(
            fixture=fixture,
            metering=metering,
            transition_delay_power=delay_power,
            transition_delay_migrate=delay_migrate,
            token_ttl=token_ttl,
            base_url="inproc://mock",
            faults=list(faults or []),
        )
    )
    outlets = {o["host"]: o["name"] for o in mock.outlets if o.get("host")}
    client = CloudClient(
        InProcessTransport(mock, clock=clock),
        Credentials(MOCK_AUTH_URL, "admin", password, "demo"),
        options=ClientOptions(
            backoff_base=0.0, backoff_cap=0.0, outlet_by_hostname=outlets
        ),
        clock=clock,
        sleeper=lambda _dt: None,
    )
    reconciler = Reconciler(
        client,
        clock,
        settings=settings or ReconcilerSettings(),
        scene_config=scene or SceneConfig(),
        event_retention=event_retention,
    )
    return Rig(clock=clock, mock=mock, client=client, reconciler=reconciler)


@pytest.fixture
def rig() -> Rig:
    return build_rig()
