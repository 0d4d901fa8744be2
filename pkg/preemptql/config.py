"""Configuration dataclasses and TOML layering.

Values are resolved as built-in defaults < `--config` file section < flags.
A flag left at None does not override anything.
"""

import math
import os
from dataclasses import MISSING, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar

import tomli

from .errors import ConfigError

LOG_ENV = "PREEMPTQL_LOG"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
OUTPUT_FORMATS = ("tsv", "json")
OPTIONAL_STRATEGIES = ("bind", "opt", "auto")
SECTIONS = ("log", "output", "server", "client", "bench")

T = TypeVar("T")


def parse_quantum(value: Any) -> float:
    """Milliseconds as a number, or the string 'inf' for no preemption."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"invalid quantum {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"invalid quantum {value!r}")
    return float(value)


@dataclass
class GlobalConfig:
    log_level: str = "INFO"
    format: str = "tsv"
    config_path: Optional[Path] = None

    def __post_init__(self):
        self.log_level = self.log_level.upper()
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(f"log level must be one of {', '.join(LOG_LEVELS)}")
        if self.format not in OUTPUT_FORMATS:
            raise ConfigError(f"output format must be one of {', '.join(OUTPUT_FORMATS)}")


@dataclass
class ServerConfig:
    data: Optional[Path] = None
    host: str = "127.0.0.1"
    port: int = 8000
    quantum_ms: float = 75.0
    workers: int = 4
    queue_size: int = 100
    page_limit: int = 2000

    def __post_init__(self):
        self.quantum_ms = parse_quantum(self.quantum_ms)
        if not self.quantum_ms > 0:
            raise ConfigError("quantum must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.queue_size < 0:
            raise ConfigError("queue size must not be negative")
        if self.page_limit < 1:
            raise ConfigError("page limit must be at least 1")
        if not 0 <= self.port <= 65535:
            raise ConfigError(f"invalid port {self.port}")
        if self.data is not None:
            self.data = Path(self.data)


@dataclass
class ClientConfig:
    endpoint: str = "http://127.0.0.1:8000"
    block_size: int = 20
    optional_strategy: str = "auto"
    max_retries: int = 8
    timeout: float = 30.0
    backoff_ms: float = 20.0
    latency_ms: float = 0.0

    def __post_init__(self):
        self.endpoint = self.endpoint.rstrip("/")
        if self.block_size < 1:
            raise ConfigError("block size must be at least 1")
        if self.optional_strategy not in OPTIONAL_STRATEGIES:
            raise ConfigError(f"optional strategy must be one of {', '.join(OPTIONAL_STRATEGIES)}")
        if self.max_retries < 0:
            raise ConfigError("max retries must not be negative")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.latency_ms < 0 or self.backoff_ms < 0:
            raise ConfigError("delays must not be negative")


@dataclass
class BenchConfig:
    """Runner settings; `quanta` replaces the workload's own list when set."""

    quanta: Optional[List[float]] = None
    queue_size: int = 100
    page_limit: int = 2000
    startup_timeout: float = 60.0
    profile_pages: int = 3

    def __post_init__(self):
        if self.quanta is not None:
            self.quanta = parse_quanta(self.quanta)
        if self.queue_size < 0:
            raise ConfigError("queue size must not be negative")
        if self.page_limit < 1 or self.profile_pages < 1:
            raise ConfigError("page limit and profile pages must be at least 1")
        if self.startup_timeout <= 0:
            raise ConfigError("startup timeout must be positive")


def parse_quanta(value: Any) -> List[float]:
    """A list of quanta, or a comma-separated string such as '75,1000,inf'."""
    items = value.split(",") if isinstance(value, str) else list(value)
    quanta = [parse_quantum(item) for item in items if not isinstance(item, str) or item.strip()]
    if not quanta:
        raise ConfigError("at least one quantum is required")
    if any(not q > 0 for q in quanta):
        raise ConfigError("quanta must be positive")
    return quanta


def load_config_file(path: Optional[Path]) -> Dict[str, Dict[str, Any]]:
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            data = tomli.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"invalid config file {path}: {e}") from None
    for section, values in data.items():
        if section not in SECTIONS or not isinstance(values, dict):
            raise ConfigError(f"unknown config section [{section}]")
    return data


def layered(cls: Type[T], section: Dict[str, Any], overrides: Dict[str, Any]) -> T:
    """Build `cls` from its defaults, then the file section, then non-None overrides."""
    names = {f.name for f in fields(cls)}
    for key in section:
        if key not in names:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
    values = dict(section)
    values.update({k: v for k, v in overrides.items() if v is not None and k in names})
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def default_of(cls: Type, name: str) -> Any:
    for f in fields(cls):
        if f.name == name:
            if f.default_factory is not MISSING:
                return f.default_factory()
            return f.default
    raise KeyError(name)


def global_config(file_data: Dict[str, Dict[str, Any]], log_level: Optional[str], fmt: Optional[str], path: Optional[Path]) -> GlobalConfig:
    level = log_level or os.environ.get(LOG_ENV) or file_data.get("log", {}).get("level") or "INFO"
    unknown = set(file_data.get("log", {})) - {"level"}
    unknown |= set(file_data.get("output", {})) - {"format"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return GlobalConfig(
        log_level=level,
        format=fmt or file_data.get("output", {}).get("format", "tsv"),
        config_path=path,
    )

