"""Run configuration loaded from TOML, overridable by environment and flags.

Precedence (highest wins): command-line flags, then ``DIAGRAMBENCH_*``
environment variables, then the config file, then built-in defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GatewayConfig:
    backend: str = "mock"  # "mock" or "http"
    endpoint: str = ""
    api_key_env: str = "DIAGRAMBENCH_API_KEY"
    model_id: str = "o3"
    repair_model_id: str = "gpt-4.1"
    max_retries: int = 2
    structured_attempts: int = 3
    temperature: float | None = None
    call_log: str | None = None
    mock_script: str | None = None


@dataclass(frozen=True)
class RenderConfig:
    dot_command: str | None = None
    timeout: float = 30.0
    image_format: str = "png"


@dataclass(frozen=True)
class ServiceConfig:
    raters: dict[str, str] = field(default_factory=dict)  # rater_id -> bearer token
    blinding: bool = True
    raters_per_diagram: int = 2


@dataclass(frozen=True)
class AppConfig:
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    out_dir: str = "out"
    max_repair_iters: int = 5
    source_path: str | None = None


_ENV_OVERRIDES = {
    "DIAGRAMBENCH_BACKEND": ("gateway", "backend", str),
    "DIAGRAMBENCH_ENDPOINT": ("gateway", "endpoint", str),
    "DIAGRAMBENCH_MODEL": ("gateway", "model_id", str),
    "DIAGRAMBENCH_REPAIR_MODEL": ("gateway", "repair_model_id", str),
    "DIAGRAMBENCH_DOT": ("render", "dot_command", str),
    "DIAGRAMBENCH_OUT": (None, "out_dir", str),
    "DIAGRAMBENCH_MAX_REPAIRS": (None, "max_repair_iters", int),
}


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section [{name}] must be a table")
    return value


def load_config(path: str | Path | None = None, env: dict | None = None) -> AppConfig:
    environ = env if env is not None else dict(os.environ)
    data: dict = {}
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"config file not found: {file_path}")
        try:
            data = tomllib.loads(file_path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {file_path}: {exc}") from exc

    gw = _section(data, "gateway")
    rc = _section(data, "render")
    sv = _section(data, "service")
    try:
        config = AppConfig(
            gateway=GatewayConfig(
                backend=gw.get("backend", "mock"),
                endpoint=gw.get("endpoint", ""),
                api_key_env=gw.get("api_key_env", "DIAGRAMBENCH_API_KEY"),
                model_id=gw.get("model_id", "o3"),
                repair_model_id=gw.get("repair_model_id", "gpt-4.1"),
                max_retries=int(gw.get("max_retries", 2)),
                structured_attempts=int(gw.get("structured_attempts", 3)),
                temperature=gw.get("temperature"),
                call_log=gw.get("call_log"),
                mock_script=gw.get("mock_script"),
            ),
            render=RenderConfig(
                dot_command=rc.get("dot_command"),
                timeout=float(rc.get("timeout", 30.0)),
                image_format=rc.get("image_format", "png"),
            ),
            service=ServiceConfig(
                raters=dict(sv.get("raters", {})),
                blinding=bool(sv.get("blinding", True)),
                raters_per_diagram=int(sv.get("raters_per_diagram", 2)),
            ),
            out_dir=data.get("out_dir", "out"),
            max_repair_iters=int(data.get("max_repair_iters", 5)),
            source_path=data.get("source_path"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc

    for var, (section, attr, cast) in _ENV_OVERRIDES.items():
        if var in environ:
            value = cast(environ[var])
            if section is None:
                config = replace(config, **{attr: value})
            else:
                config = replace(config, **{section: replace(getattr(config, section), **{attr: value})})

    if config.gateway.backend not in ("mock", "http"):
        raise ConfigError(f"unknown backend kind: {config.gateway.backend!r}")
    if config.gateway.backend == "http" and not config.gateway.endpoint:
        raise ConfigError("http backend requires gateway.endpoint")
    return config
