from __future__ import annotations

from typing import Any, Callable

import numpy as np
import pytest

from core import db
from core.analog_model import LevelConfig, render_waveform
from core.pattern_gen import BitPattern, prbs_generate, prbs_spec
from core.scenario import ScenarioConfig, parse_scenario
from core.serializer import EdgeProgram, place_edges


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    # never pick up a developer's var/settings.toml
    monkeypatch.setenv("BENCH_SETTINGS_PATH", str(tmp_path / "no-settings.toml"))
    for key in ("BENCH_DB_URL", "BENCH_DB_PATH", "BENCH_SITE_WORKERS", "BENCH_RUN_HISTORY", "BENCH_LOG_LEVEL"):
        monkeypatch.delenv(key, raising=False)
    yield


@pytest.fixture
def bench_db(tmp_path, monkeypatch):
    monkeypatch.setenv("BENCH_DB_URL", f"sqlite:///{(tmp_path / 'runs.sqlite3').as_posix()}")
    db.reset_engine()
    db.init_db()
    yield
    db.reset_engine()


def _merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@pytest.fixture
def make_cfg() -> Callable[..., ScenarioConfig]:
    """Small, fast scenarios; keyword overrides merge into nested sections."""

    def factory(kind: str = "loopback", **overrides: Any) -> ScenarioConfig:
        base: dict[str, Any] = {
            "name": f"small_{kind}",
            "kind": kind,
            "data_rate": 5.0e9 if kind == "loopback" else 2.5e9,
            "seed": 1,
            "n_bits": 1024 if kind == "loopback" else 256,
            "render_dt": 5.0,
        }
        return parse_scenario(_merge(base, overrides))

    return factory


@pytest.fixture
def render_bits() -> Callable[..., Any]:
    def factory(bits, rate: float, levels: LevelConfig | None = None, dt: float = 1.0):
        pattern = BitPattern(bits=np.asarray(bits, dtype=np.uint8), bit_rate=rate)
        edges = place_edges(pattern, EdgeProgram())
        return render_waveform(edges, levels or LevelConfig(), dt)

    return factory


@pytest.fixture
def prbs7() -> Callable[[int, float], BitPattern]:
    def factory(n_bits: int, rate: float) -> BitPattern:
        return prbs_generate(prbs_spec(7), n_bits, rate)

    return factory
