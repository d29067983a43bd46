from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import pandas as pd

from core.analog_model import Waveform
from core.errors import InvalidWaveform, IoError, UnsupportedFormat
from core.eye_analysis import EyeRecord, eye_histogram
from core.sampler import Capture

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("json", "kv")
TABLE_FORMATS = ("csv",)
FORMATS = REPORT_FORMATS + TABLE_FORMATS
FLOAT_FORMAT = "%.17g"


def _prepare(path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"출력 디렉터리를 만들 수 없습니다: {path.parent} ({exc})") from exc
    return path


def export_waveform(w: Waveform, path: str | Path) -> Path:
    """One (time_ps, voltage_mv) row per sample below a `# dt_ps=... t0_ps=...` header line."""
    path = _prepare(path)
    df = pd.DataFrame({"time_ps": w.times, "voltage_mv": w.samples})
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(f"# dt_ps={w.dt!r} t0_ps={w.t0!r}\n")
            df.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise IoError(f"파형을 저장할 수 없습니다: {path} ({exc})") from exc
    return path


def read_waveform(path: str | Path) -> Waveform:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().strip()
        df = pd.read_csv(path, skiprows=1, float_precision="round_trip")
    except OSError as exc:
        raise IoError(f"파형 파일을 읽을 수 없습니다: {path} ({exc})") from exc

    fields: dict[str, float] = {}
    for token in header.lstrip("#").split():
        key, _, value = token.partition("=")
        try:
            fields[key] = float(value)
        except ValueError:
            continue
    if "dt_ps" not in fields or "t0_ps" not in fields or "voltage_mv" not in df.columns:
        raise InvalidWaveform(f"파형 파일 형식이 올바르지 않습니다: {path}")
    return Waveform(samples=df["voltage_mv"].to_numpy(dtype=float), dt=fields["dt_ps"], t0=fields["t0_ps"])


def export_capture(capture: Capture, path: str | Path) -> Path:
    path = _prepare(path)
    df = pd.DataFrame({"strobe_time_ps": capture.strobe_times, "decision": capture.decisions.astype(int)})
    try:
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise IoError(f"캡처를 저장할 수 없습니다: {path} ({exc})") from exc
    return path


def export_table(df: pd.DataFrame, path: str | Path) -> Path:
    path = _prepare(path)
    try:
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise IoError(f"표를 저장할 수 없습니다: {path} ({exc})") from exc
    return path


def _flatten(prefix: str, value: Any, out: dict[str, str]) -> None:
    if isinstance(value, Mapping):
        for key, item in value.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), item, out)
    elif isinstance(value, (list, tuple)):
        for idx, item in enumerate(value):
            _flatten(f"{prefix}.{idx}", item, out)
    else:
        out[prefix] = json.dumps(value, ensure_ascii=False)


def render_report(report: Mapping[str, Any], fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if fmt == "kv":
        flat: dict[str, str] = {}
        _flatten("", report, flat)
        return "".join(f"{key}={flat[key]}\n" for key in sorted(flat))
    raise UnsupportedFormat(f"지원하지 않는 보고서 형식입니다: {fmt} (지원: {REPORT_FORMATS})")


def export_report(report: Mapping[str, Any], path: str | Path, fmt: str = "json") -> Path:
    text = render_report(report, fmt)
    path = _prepare(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"보고서를 저장할 수 없습니다: {path} ({exc})") from exc
    return path


def export(obj: Any, path: str | Path, fmt: str) -> Path:
    """Write a report, waveform, capture or eye to `path` in `fmt` (json, kv or csv)."""
    if fmt not in FORMATS:
        raise UnsupportedFormat(f"지원하지 않는 형식입니다: {fmt} (지원: {FORMATS})")
    if fmt in REPORT_FORMATS:
        if isinstance(obj, Mapping):
            written = export_report(obj, path, fmt)
        elif hasattr(obj, "to_dict"):
            written = export_report(obj.to_dict(), path, fmt)
        else:
            raise UnsupportedFormat(f"{type(obj).__name__}은(는) {fmt} 형식으로 내보낼 수 없습니다.")
    elif isinstance(obj, Waveform):
        written = export_waveform(obj, path)
    elif isinstance(obj, Capture):
        written = export_capture(obj, path)
    elif isinstance(obj, EyeRecord):
        written = export_table(eye_histogram(obj), path)
    elif isinstance(obj, pd.DataFrame):
        written = export_table(obj, path)
    else:
        raise UnsupportedFormat(f"{type(obj).__name__}은(는) csv 형식으로 내보낼 수 없습니다.")
    logger.debug("export path=%s format=%s", written, fmt)
    return written
