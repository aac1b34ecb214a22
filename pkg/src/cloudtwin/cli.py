"""Operator entry point: serve the twin, take one-shot snapshots, replay scenarios.

Exit codes are a stable contract: 0 success, 2 bad configuration or
malformed scenario, 3 gateway bind failure, 4 snapshot fetch failure.
Logs go to stderr; data (snapshots, transcripts) goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
from pathlib import Path
from typing import Any

from .clock import SystemClock, VirtualClock
from .client import (
    ClientOptions,
    CloudClient,
    CloudClientError,
    Credentials,
    HttpTransport,
    InProcessTransport,
)
from .config import ConfigError, TwinConfig, load_config, parse_listen, required_cloud_keys
from .gateway import Gateway, GatewayServer
from .layout import build_scene
from .mockcloud import MockCloud, MockConfig
from .model import canonical_dumps
from .reconciler import CommandRejected, Command, Reconciler

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BIND = 3
EXIT_FETCH = 4

MOCK_BASE_URL = "inproc://mock"
MOCK_PROJECT = "demo"


def _fail_config(messages: list[str]) -> int:
    for message in messages:
        print(f"config error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def _load(args) -> TwinConfig:
    return load_config(args.config, env=os.environ)


def _build_mock(config: TwinConfig) -> MockCloud:
    mock_cfg = MockConfig(
        fixture=config.mock.fixture or None,
        metering=config.mock.metering or None,
        transition_delay_power=config.mock.transition_delay_power,
        transition_delay_migrate=config.mock.transition_delay_migrate,
        token_ttl=config.mock.token_ttl,
        base_url=MOCK_BASE_URL,
    )
    return MockCloud(mock_cfg)


def _build_client(config: TwinConfig, use_mock: bool, clock) -> CloudClient:
    if use_mock:
        mock = _build_mock(config)
        transport = InProcessTransport(mock, clock=clock)
        credentials = Credentials(
            auth_url=MOCK_BASE_URL + "/identity/v3",
            username=mock.config.username,
            password=mock.config.password,
            project_name=MOCK_PROJECT,
        )
        outlets = {o["host"]: o["name"] for o in mock.outlets if o.get("host")}
        outlets.update(config.metering.outlets)
    else:
        transport = HttpTransport()
        credentials = Credentials(
            auth_url=config.cloud.auth_url,
            username=config.cloud.username,
            password=config.cloud.password,
            project_name=config.cloud.project_name,
            user_domain=config.cloud.user_domain,
        )
        outlets = dict(config.metering.outlets)
    options = ClientOptions(
        force_host_off=config.reconciler.force_host_off,
        metering_source=config.metering.source,
        outlet_by_hostname=outlets,
    )
    return CloudClient(transport, credentials, options=options, clock=clock)


def _build_reconciler(config: TwinConfig, client: CloudClient, clock) -> Reconciler:
    return Reconciler(
        client,
        clock,
        settings=config.reconciler,
        scene_config=config.scene,
        event_retention=config.gateway.event_retention,
    )


# -- serve ---------------------------------------------------------------------


def cmd_serve(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        return _fail_config(exc.messages)

    if not args.mock:
        missing = required_cloud_keys(config)
        if missing:
            return _fail_config([f"missing required key {key}" for key in missing])

    listen = args.listen or config.gateway.listen
    try:
        host, port = parse_listen(listen)
    except ValueError as exc:
        return _fail_config([f"--listen: {exc}"])

    clock = SystemClock()
    client = _build_client(config, args.mock, clock)
    reconciler = _build_reconciler(config, client, clock)
    gateway = Gateway(
        reconciler,
        heartbeat_interval=config.gateway.heartbeat_interval,
        retry_after=config.reconciler.poll_interval,
    )
    try:
        server = GatewayServer(gateway, host, port)
    except OSError as exc:
        print(f"cannot bind {listen}: {exc}", file=sys.stderr)
        return EXIT_BIND

    stop = threading.Event()
    worker = threading.Thread(target=reconciler.run, args=(stop,), name="reconciler", daemon=True)
    worker.start()
    server.start()
    bound_host, bound_port = server.address
    log.info("serving on http://%s:%d (%s)", bound_host, bound_port, "mock cloud" if args.mock else "live cloud")
    print(f"listening on {bound_host}:{bound_port}", file=sys.stderr)
    try:
        while True:
            stop.wait(3600)
    except KeyboardInterrupt:
        log.info("shutting down")
    finally:
        stop.set()
        server.stop()
        worker.join(timeout=5)
    return EXIT_OK


# -- snapshot ---------------------------------------------------------------------


def cmd_snapshot(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        return _fail_config(exc.messages)

    if not args.mock:
        missing = required_cloud_keys(config)
        if missing:
            return _fail_config([f"missing required key {key}" for key in missing])

    clock = SystemClock()
    client = _build_client(config, args.mock, clock)
    try:
        token = client.authenticate()
        state = client.fetch_inventory(token, poll_seq=1)
        readings = client.fetch_metering(state.hypervisors, token)
    except CloudClientError as exc:
        print(f"snapshot failed: {exc}", file=sys.stderr)
        return EXIT_FETCH

    snapshot = build_scene(
        state, readings={r.hypervisor_id: r.watts for r in readings}, config=config.scene
    )
    payload = snapshot.to_canonical_json() + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(payload)
    else:
        try:
            Path(args.out).write_text(payload)
        except OSError as exc:
            print(f"cannot write {args.out}: {exc}", file=sys.stderr)
            return 1
    return EXIT_OK


# -- replay ----------------------------------------------------------------------


class ScenarioError(Exception):
    pass


def _parse_scenario(path: str) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("steps"), list):
        raise ScenarioError('scenario must be an object with a "steps" list')

    last_at = -1.0
    for i, step in enumerate(doc["steps"]):
        if not isinstance(step, dict):
            raise ScenarioError(f"step {i} must be an object")
        at = step.get("at")
        if not isinstance(at, (int, float)) or isinstance(at, bool) or at < 0:
            raise ScenarioError(f"step {i}: 'at' must be a non-negative number")
        if at < last_at:
            raise ScenarioError(f"step {i}: steps must be ordered by 'at'")
        last_at = float(at)
        actions = [k for k in ("command", "fault", "advance") if k in step]
        if len(actions) != 1:
            raise ScenarioError(f"step {i}: exactly one of command/fault/advance required")
        kind = actions[0]
        value = step[kind]
        if kind == "command":
            if not isinstance(value, dict) or not isinstance(value.get("kind"), str) or not isinstance(
                value.get("subject"), str
            ):
                raise ScenarioError(f"step {i}: command needs string 'kind' and 'subject'")
        elif kind == "fault":
            if (
                not isinstance(value, dict)
                or not isinstance(value.get("endpoint"), str)
                or value.get("behaviour") not in ("http-500", "timeout", "stall")
                or not isinstance(value.get("count", 1), int)
            ):
                raise ScenarioError(
                    f"step {i}: fault needs 'endpoint' and 'behaviour' in http-500|timeout|stall"
                )
        else:
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise ScenarioError(f"step {i}: advance must be a non-negative number of seconds")
    return doc


def cmd_replay(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        return _fail_config(exc.messages)
    try:
        scenario = _parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = sys.stdout
    clock = VirtualClock(0.0)
    mock = _build_mock(config)
    transport = InProcessTransport(mock, clock=clock)
    credentials = Credentials(
        auth_url=MOCK_BASE_URL + "/identity/v3",
        username=mock.config.username,
        password=mock.config.password,
        project_name=MOCK_PROJECT,
    )
    outlets = {o["host"]: o["name"] for o in mock.outlets if o.get("host")}
    outlets.update(config.metering.outlets)
    client = CloudClient(
        transport,
        credentials,
        options=ClientOptions(
            force_host_off=config.reconciler.force_host_off,
            metering_source=config.metering.source,
            outlet_by_hostname=outlets,
            backoff_base=0.0,
            backoff_cap=0.0,
        ),
        clock=clock,
        sleeper=lambda _dt: None,
    )
    reconciler = _build_reconciler(config, client, clock)

    steps = list(scenario["steps"])
    settle = float(scenario.get("settle_seconds", 5.0))
    horizon = (max((float(s["at"]) for s in steps), default=0.0)) + settle
    interval = config.reconciler.poll_interval
    was_stale = False
    step_idx = 0
    last_seq = 0

    def drain() -> None:
        nonlocal last_seq
        records, _ = reconciler.events_since(last_seq)
        for record in records:
            out.write(f"t={clock.now():.3f} seq={record.seq} {canonical_dumps(record.doc)}\n")
            last_seq = record.seq

    while True:
        reconciler.tick()
        drain()
        view = reconciler.latest()
        stale = bool(view.stale) if view is not None else False
        if stale != was_stale:
            out.write(f"t={clock.now():.3f} staleness={'raised' if stale else 'cleared'}\n")
            was_stale = stale

        while step_idx < len(steps) and float(steps[step_idx]["at"]) <= clock.now():
            step = steps[step_idx]
            step_idx += 1
            if "command" in step:
                body = step["command"]
                cmd = Command(
                    kind=body["kind"], subject_id=body["subject"], target_hypervisor_id=body.get("target")
                )
                try:
                    op = reconciler.submit_command(cmd)
                    out.write(f"t={clock.now():.3f} command {body['kind']} {body['subject']} accepted {op.op_id}\n")
                except CommandRejected as exc:
                    out.write(
                        f"t={clock.now():.3f} command {body['kind']} {body['subject']} rejected {exc.reason}: {exc}\n"
                    )
                drain()
            elif "fault" in step:
                fault = step["fault"]
                mock.add_fault(fault["endpoint"], fault["behaviour"], fault.get("count", 1))
                out.write(
                    f"t={clock.now():.3f} fault {fault['endpoint']} {fault['behaviour']} x{fault.get('count', 1)}\n"
                )
            else:
                clock.advance(float(step["advance"]))

        if clock.now() >= horizon:
            break
        clock.advance(interval)

    return EXIT_OK


# -- entry ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloudtwin", description="Digital twin service for an OpenStack-style cluster")
    parser.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the reconciler and gateway")
    serve.add_argument("--config", default=None, help="path to TOML config")
    serve.add_argument("--mock", action="store_true", help="run against the embedded simulator")
    serve.add_argument("--listen", default=None, help="HOST:PORT for the gateway (overrides config)")
    serve.set_defaults(func=cmd_serve)

    snapshot = sub.add_parser("snapshot", help="fetch once and print the scene as canonical JSON")
    snapshot.add_argument("--config", default=None)
    snapshot.add_argument("--mock", action="store_true")
    snapshot.add_argument("--out", default=None, help="output file, or - for stdout (default)")
    snapshot.set_defaults(func=cmd_snapshot)

    replay = sub.add_parser("replay", help="run a scripted scenario against the simulator")
    replay.add_argument("scenario", help="path to a scenario JSON file")
    replay.add_argument("--config", default=None)
    replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
