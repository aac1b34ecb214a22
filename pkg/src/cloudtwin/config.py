"""Service configuration: one TOML file plus TWIN_* environment overrides.

Sections map to the moving parts: [cloud] credentials and endpoints,
[reconciler] poll cadence and operation timeouts, [scene] energy range,
[metering] source and host-to-outlet wiring, [gateway] listen address
and stream tuning, [mock] simulator knobs for --mock runs. Every key
has a default so an empty file (or no file) is a valid mock-mode
config; real-cloud mode additionally needs credentials, which the CLI
checks at startup.

Environment variables named TWIN_<SECTION>_<KEY> override file values,
e.g. TWIN_CLOUD_PASSWORD=... or TWIN_RECONCILER_POLL_INTERVAL=0.5.
"""

from __future__ import annotations

import sys
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .layout import SceneConfig


class ConfigError(Exception):
    """One or more configuration problems; messages name each key."""

    def __init__(self, messages: list[str]):
        self.messages = messages
        super().__init__("; ".join(messages))


@dataclass(frozen=True)
class CloudSettings:
    auth_url: str = ""
    username: str = ""
    password: str = ""
    project_name: str = ""
    user_domain: str = "Default"


@dataclass(frozen=True)
class ReconcilerSettings:
    poll_interval: float = 1.0
    metering_every: int = 5
    timeout_power: float = 60.0
    timeout_migrate: float = 300.0
    staleness_after: int = 3
    force_host_off: bool = False


@dataclass(frozen=True)
class MeteringSettings:
    # source: "catalog" (service-catalog URL), an http(s) URL, a file path, or "" to disable
    source: str = "catalog"
    outlets: dict[str, str] = field(default_factory=dict)  # hostname -> outlet name


@dataclass(frozen=True)
class GatewaySettings:
    listen: str = "127.0.0.1:8080"
    heartbeat_interval: float = 10.0
    event_retention: int = 1000


@dataclass(frozen=True)
class MockSettings:
    fixture: str = ""   # empty -> bundled example world
    metering: str = ""
    transition_delay_power: float = 2.0
    transition_delay_migrate: float = 3.0
    token_ttl: float = 3600.0


@dataclass(frozen=True)
class TwinConfig:
    cloud: CloudSettings = CloudSettings()
    reconciler: ReconcilerSettings = ReconcilerSettings()
    scene: SceneConfig = SceneConfig()
    metering: MeteringSettings = MeteringSettings()
    gateway: GatewaySettings = GatewaySettings()
    mock: MockSettings = MockSettings()


_SECTIONS: dict[str, type] = {
    "cloud": CloudSettings,
    "reconciler": ReconcilerSettings,
    "scene": SceneConfig,
    "metering": MeteringSettings,
    "gateway": GatewaySettings,
    "mock": MockSettings,
}


def _coerce(raw: str, target: type) -> Any:
    if target is bool:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if target is int:
        return int(raw)
    if target is float:
        return float(raw)
    return raw


def _field_types(section_cls: type) -> dict[str, type]:
    out = {}
    for f in fields(section_cls):
        t = f.type if isinstance(f.type, type) else None
        if t is None:
            # from __future__ import annotations leaves strings; resolve the simple ones
            name = str(f.type)
            t = {"str": str, "int": int, "float": float, "bool": bool}.get(name, str)
        out[f.name] = t
    return out


def _build_section(name: str, cls: type, data: Mapping[str, Any], errors: list[str]):
    kwargs: dict[str, Any] = {}
    types = _field_types(cls)
    for key, value in data.items():
        if key not in types:
            errors.append(f"unknown key [{name}] {key}")
            continue
        target = types[key]
        if name == "metering" and key == "outlets":
            if not isinstance(value, Mapping) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in value.items()
            ):
                errors.append(f"[{name}] outlets must map hostname strings to outlet-name strings")
                continue
            kwargs[key] = dict(value)
            continue
        if target in (int, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
            kwargs[key] = target(value)
        elif isinstance(value, target) and not (target is not bool and isinstance(value, bool)):
            kwargs[key] = value
        else:
            errors.append(f"[{name}] {key}: expected {target.__name__}, got {type(value).__name__}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"[{name}]: {exc}")
        return cls()


def _apply_env(config: TwinConfig, env: Mapping[str, str], errors: list[str]) -> TwinConfig:
    for var, raw in sorted(env.items()):
        if not var.startswith("TWIN_"):
            continue
        rest = var[len("TWIN_"):]
        section_name, _, key_part = rest.partition("_")
        section_name = section_name.lower()
        key = key_part.lower()
        cls = _SECTIONS.get(section_name)
        if cls is None or not key:
            errors.append(f"unrecognised environment override {var}")
            continue
        types = _field_types(cls)
        if key not in types:
            errors.append(f"unrecognised environment override {var}")
            continue
        if section_name == "metering" and key == "outlets":
            errors.append(f"{var}: outlet mapping cannot be set from the environment")
            continue
        try:
            value = _coerce(raw, types[key])
        except ValueError as exc:
            errors.append(f"{var}: {exc}")
            continue
        section = getattr(config, section_name)
        try:
            config = replace(config, **{section_name: replace(section, **{key: value})})
        except ValueError as exc:
            errors.append(f"{var}: {exc}")
    return config


def _validate(config: TwinConfig, errors: list[str]) -> None:
    r = config.reconciler
    if r.poll_interval <= 0:
        errors.append("[reconciler] poll_interval must be > 0")
    if r.metering_every < 1:
        errors.append("[reconciler] metering_every must be >= 1")
    if r.timeout_power <= 0 or r.timeout_migrate <= 0:
        errors.append("[reconciler] operation timeouts must be > 0")
    if r.staleness_after < 1:
        errors.append("[reconciler] staleness_after must be >= 1")
    if config.scene.energy_min_watts >= config.scene.energy_max_watts:
        errors.append("[scene] energy_min_watts must be < energy_max_watts")
    if config.gateway.heartbeat_interval <= 0:
        errors.append("[gateway] heartbeat_interval must be > 0")
    if config.gateway.event_retention < 1:
        errors.append("[gateway] event_retention must be >= 1")
    try:
        parse_listen(config.gateway.listen)
    except ValueError as exc:
        errors.append(f"[gateway] listen: {exc}")
    if config.mock.transition_delay_power < 0 or config.mock.transition_delay_migrate < 0:
        errors.append("[mock] transition delays must be >= 0")
    if config.mock.token_ttl <= 0:
        errors.append("[mock] token_ttl must be > 0")


def parse_listen(listen: str) -> tuple[str, int]:
    """Split a host:port listen address; the port must be 0..65535."""
    host, sep, port_text = listen.rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected HOST:PORT, got {listen!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"invalid port {port_text!r}") from None
    if not 0 <= port <= 65535:
        raise ValueError(f"port {port} out of range")
    return host, port


def required_cloud_keys(config: TwinConfig) -> list[str]:
    """Names of [cloud] credentials still missing (empty) for real-cloud mode."""
    missing = []
    for key in ("auth_url", "username", "password", "project_name"):
        if not getattr(config.cloud, key):
            missing.append(f"cloud.{key}")
    return missing


def load_config(path: str | Path | None, env: Mapping[str, str] | None = None) -> TwinConfig:
    """Parse the config file (optional) and apply environment overrides.

    Raises ConfigError listing every problem found; TOML syntax errors
    carry the parser's line and column.
    """
    errors: list[str] = []
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config file: {exc}"]) from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"config syntax error: {exc}"]) from exc

    sections: dict[str, Any] = {}
    for name, value in data.items():
        if name not in _SECTIONS:
            errors.append(f"unknown section [{name}]")
            continue
        if not isinstance(value, Mapping):
            errors.append(f"[{name}] must be a table")
            continue
        sections[name] = _build_section(name, _SECTIONS[name], value, errors)

    config = TwinConfig(**sections)
    config = _apply_env(config, env if env is not None else {}, errors)
    _validate(config, errors)
    if errors:
        raise ConfigError(errors)
    return config
