from __future__ import annotations

import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
DEFAULT_SETTINGS_PATH = PROJECT_ROOT / "var" / "settings.toml"

_TRUE_VALUES = {"1", "true", "yes", "y", "on"}
_FALSE_VALUES = {"0", "false", "no", "n", "off"}


@lru_cache(maxsize=4)
def _read_settings_file(path: str) -> dict[str, object]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError):
        return {}


def _settings_path() -> Path:
    override = os.environ.get("BENCH_SETTINGS_PATH")
    if override and override.strip():
        return Path(override.strip()).expanduser()
    return DEFAULT_SETTINGS_PATH


def get_setting(name: str) -> str | None:
    """Fetch a setting from var/settings.toml or environment variables."""
    values = _read_settings_file(str(_settings_path()))
    value = values.get(name)
    if value is not None and str(value).strip():
        return str(value).strip()

    env_value = os.environ.get(name)
    if env_value and env_value.strip():
        return env_value.strip()
    return None


def _normalize_bool(value: str | None, default: bool) -> bool:
    if value is None:
        return default
    normalized = value.strip().lower()
    if normalized in _TRUE_VALUES:
        return True
    if normalized in _FALSE_VALUES:
        return False
    return default


@dataclass(frozen=True)
class BenchSettings:
    db_url: str | None
    db_path: str | None
    site_workers: int | None
    run_history: bool
    log_level: str


def load_settings() -> BenchSettings:
    workers_raw = get_setting("BENCH_SITE_WORKERS")
    site_workers: int | None = None
    if workers_raw:
        try:
            site_workers = max(1, int(workers_raw))
        except ValueError:
            site_workers = None

    return BenchSettings(
        db_url=get_setting("BENCH_DB_URL"),
        db_path=get_setting("BENCH_DB_PATH"),
        site_workers=site_workers,
        run_history=_normalize_bool(get_setting("BENCH_RUN_HISTORY"), True),
        log_level=(get_setting("BENCH_LOG_LEVEL") or "INFO").upper(),
    )
