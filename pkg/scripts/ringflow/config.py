from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .constants import (
    DEFAULT_BURN_IN,
    DEFAULT_ENV_FILE,
    DEFAULT_GRID_POINTS,
    DEFAULT_MAX_DENOMINATOR,
    DEFAULT_SEED,
    DEFAULT_STEPS,
    DEFAULT_WORKERS,
    LOG_LEVEL_ENV,
    MAX_DENOMINATOR_ENV,
    SEED_ENV,
    WORKERS_ENV,
)
from .errors import ConfigError


def read_env_file(file_path: str | None = None) -> Dict[str, str]:
    """KEY=VALUE settings from an env file, with ``export`` prefixes and quotes stripped."""
    path = Path((file_path or DEFAULT_ENV_FILE).strip())
    if not path.is_file():
        logging.debug("Env file %s not found; skipping load", path)
        return {}

    settings: Dict[str, str] = {}
    for number, raw_line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if key.startswith("export "):
            key = key[len("export ") :].strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{number}: expected KEY=VALUE, got {raw_line.strip()!r}")
        settings[key] = value.strip().strip("'\"")
    return settings


def load_env_file(file_path: str | None = None) -> Dict[str, str]:
    """Exports env file settings the shell does not already define; returns the ones applied."""
    applied = {key: value for key, value in read_env_file(file_path).items() if key not in os.environ}
    os.environ.update(applied)
    return applied


def get_env_int(var_name: str, default: Optional[int] = None) -> Optional[int]:
    raw = (os.getenv(var_name) or "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError as err:
        raise ConfigError(f"Environment variable {var_name} must be an integer, got {raw!r}") from err


def configure_logging() -> None:
    level = logging.getLevelName(os.getenv(LOG_LEVEL_ENV, "INFO").strip().upper())
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(format="%(levelname)s: %(message)s")
    logging.getLogger().setLevel(level)
    logging.getLogger("numexpr").setLevel(logging.WARNING)


def resolve_seed(cli_seed: Optional[int]) -> int:
    override = get_env_int(SEED_ENV)
    if override is not None:
        if cli_seed is not None and cli_seed != override:
            logging.info("%s=%s overrides --seed %s", SEED_ENV, override, cli_seed)
        return override
    return DEFAULT_SEED if cli_seed is None else cli_seed


def worker_count(cli_workers: Optional[int]) -> int:
    if cli_workers is not None:
        return max(1, cli_workers)
    return max(1, get_env_int(WORKERS_ENV, DEFAULT_WORKERS))


def max_denominator() -> int:
    value = get_env_int(MAX_DENOMINATOR_ENV, DEFAULT_MAX_DENOMINATOR)
    if value < 1:
        raise ConfigError(f"{MAX_DENOMINATOR_ENV} must be positive")
    return value


def parse_pair(raw: str, flag: str) -> Tuple[str, str]:
    parts = [part.strip() for part in raw.split(",")]
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"{flag} expects two comma-separated values, got {raw!r}")
    return parts[0], parts[1]


def parse_ring(raw: str) -> Tuple[int, int]:
    first, second = parse_pair(raw, "--ring")
    try:
        n, m = int(first), int(second)
    except ValueError as err:
        raise ConfigError(f"--ring expects integers N,M, got {raw!r}") from err
    if n < 1 or m < n:
        raise ConfigError(f"--ring needs 1 <= N <= M, got N={n}, M={m}")
    return n, m


def split_list(raw: str) -> List[str]:
    return [part.strip() for part in raw.replace(";", ",").split(",") if part.strip()]


@dataclass
class RunConfig:
    command: str
    model_spec: Optional[Path] = None
    ring: Optional[Tuple[int, int]] = None
    densities: List[str] = field(default_factory=list)
    grid: int = DEFAULT_GRID_POINTS
    steps: int = DEFAULT_STEPS
    burn_in: int = DEFAULT_BURN_IN
    seed: int = DEFAULT_SEED
    stride: Optional[int] = None
    output: Optional[Path] = None
    format: str = "csv"
    clamp_zero: bool = False
    init: str = "uniform"
    input_path: Optional[Path] = None
    template: Optional[Path] = None
    max_segments: int = 6
    free_speed_ref: Optional[Tuple[float, float]] = None
    workers: int = DEFAULT_WORKERS

    def validate(self) -> None:
        needs_model = self.command in ("eigen", "simulate", "diagram", "sweep")
        if needs_model and self.model_spec is None:
            raise ConfigError(f"'{self.command}' requires --model")
        for label, path in (
            ("--model", self.model_spec),
            ("--input", self.input_path),
            ("--template", self.template),
        ):
            if path is not None and not path.exists():
                raise ConfigError(f"{label} file not found: {path}")
        if self.command in ("eigen", "simulate") and self.ring is None:
            raise ConfigError(f"'{self.command}' requires --ring N,M")
        if self.command == "sweep" and not self.densities:
            raise ConfigError("'sweep' requires --densities")
        if self.command == "fit" and self.input_path is None:
            raise ConfigError("'fit' requires --input")
        if self.command in ("simulate", "sweep", "diagram", "fit") and self.output is None:
            raise ConfigError(f"'{self.command}' requires --out PREFIX")
        if self.steps < 1:
            raise ConfigError("--steps must be at least 1")
        if self.burn_in < 0:
            raise ConfigError("--burn-in must be non-negative")
        if self.grid < 2:
            raise ConfigError("--grid must be at least 2")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("--stride must be at least 1")
        if self.max_segments < 1:
            raise ConfigError("--max-segments must be at least 1")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"--format must be csv or json, got {self.format!r}")


__all__ = [
    "RunConfig",
    "configure_logging",
    "get_env_int",
    "load_env_file",
    "max_denominator",
    "parse_pair",
    "parse_ring",
    "read_env_file",
    "resolve_seed",
    "split_list",
    "worker_count",
]
