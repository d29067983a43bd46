from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from core.analog_model import JitterConfig, Waveform
from core.errors import OutOfRange, QuantizationError, RangeExceeded, ShapeMismatch
from core.pattern_gen import BitPattern
from core.serializer import DEFAULT_RANGE_PS, DEFAULT_RESOLUTION_PS

PeriodicSource = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, slots=True)
class SamplerConfig:
    threshold: float = 2000.0
    strobe_resolution: float = DEFAULT_RESOLUTION_PS
    strobe_range: float = DEFAULT_RANGE_PS
    voltage_step: float = 5.0
    sweep_low: float = 1000.0
    sweep_high: float = 3000.0
    aperture_jitter: JitterConfig | None = None

    def __post_init__(self) -> None:
        if self.strobe_resolution <= 0:
            raise QuantizationError(f"strobe_resolution은 양수여야 합니다: {self.strobe_resolution}")
        if self.strobe_range < self.strobe_resolution:
            raise RangeExceeded("strobe_range는 strobe_resolution 이상이어야 합니다.")
        if self.voltage_step <= 0 or self.sweep_high <= self.sweep_low:
            raise OutOfRange(
                f"전압 스윕 설정이 올바르지 않습니다: step={self.voltage_step}, low={self.sweep_low}, high={self.sweep_high}"
            )


@dataclass(slots=True, eq=False)
class Capture:
    strobe_times: np.ndarray
    decisions: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.strobe_times, dtype=float).reshape(-1)
        decisions = np.asarray(self.decisions, dtype=np.uint8).reshape(-1)
        if times.shape != decisions.shape:
            raise ShapeMismatch("스트로브 시간과 판정 개수가 다릅니다.")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ShapeMismatch("스트로브 시간은 엄격하게 증가해야 합니다.")
        self.strobe_times = times
        self.decisions = decisions

    def __len__(self) -> int:
        return int(self.decisions.size)


@dataclass(slots=True)
class CaptureComparison:
    passed: bool
    error_count: int
    error_positions: list[int] = field(default_factory=list)
    n_bits: int = 0


def strobe_sample(w: Waveform, times: Sequence[float] | np.ndarray, cfg: SamplerConfig) -> Capture:
    """Compare the interpolated voltage at each strobe against the threshold (>= counts as 1)."""
    times = np.asarray(times, dtype=float).reshape(-1)
    ratio = times / cfg.strobe_resolution
    if np.any(np.abs(ratio - np.rint(ratio)) > 1e-6):
        bad = times[np.abs(ratio - np.rint(ratio)) > 1e-6][0]
        raise QuantizationError(f"스트로브 시간 {bad} ps 가 {cfg.strobe_resolution} ps 격자에 있지 않습니다.")
    if times.size and (times.min() < w.t0 or times.max() > w.t_end):
        raise OutOfRange(f"스트로브가 파형 구간 [{w.t0}, {w.t_end}] ps 밖에 있습니다.")

    sample_times = times
    if cfg.aperture_jitter is not None and not cfg.aperture_jitter.is_zero:
        rng = np.random.default_rng(cfg.aperture_jitter.seed)
        offsets = np.zeros(times.size)
        if cfg.aperture_jitter.rj_rms > 0:
            offsets += rng.normal(0.0, cfg.aperture_jitter.rj_rms, times.size)
        if cfg.aperture_jitter.dj_pp > 0:
            half = cfg.aperture_jitter.dj_pp / 2
            offsets += rng.uniform(-half, half, times.size)
        sample_times = np.clip(times + offsets, w.t0, w.t_end)

    voltages = w.value_at(sample_times)
    return Capture(strobe_times=times, decisions=(voltages >= cfg.threshold).astype(np.uint8))


def periodic_source_from_waveform(w: Waveform, period: float) -> PeriodicSource:
    """Treat the first `period` ps of `w` as one cycle of a repeating signal."""
    if period <= 0 or period > w.span:
        raise OutOfRange(f"주기 {period} ps 가 파형 길이 {w.span} ps 를 벗어났습니다.")

    def source(times: np.ndarray) -> np.ndarray:
        phase = np.mod(np.asarray(times, dtype=float) - w.t0, period)
        return w.value_at(w.t0 + phase)

    return source


def equivalent_time_scan(
    periodic_source: PeriodicSource,
    period: float,
    cfg: SamplerConfig,
    *,
    t_origin: float = 0.0,
) -> Waveform:
    """Rebuild one period of a repetitive signal with a single comparator.

    Each acquisition cycle strobes once per signal period; the strobe phase advances by the
    strobe resolution every cycle and, after a full phase sweep, the comparator threshold
    advances by one voltage step. The reconstructed voltage at a phase is the highest threshold
    that still returned a 1 (floor quantisation, within one voltage step of the source).

    A phase that reads 1 at the top threshold, or 0 at every threshold, lies outside
    [sweep_low, sweep_high] and raises OutOfRange instead of being clipped.
    """
    if period > cfg.strobe_range:
        raise RangeExceeded(f"주기 {period} ps 가 스트로브 범위 {cfg.strobe_range} ps 를 초과합니다.")
    if period <= 0:
        raise RangeExceeded(f"주기는 양수여야 합니다: {period}")

    n_phase = int(math.ceil(period / cfg.strobe_resolution - 1e-9))
    phases = cfg.strobe_resolution * np.arange(n_phase)
    thresholds = np.arange(cfg.sweep_low, cfg.sweep_high + cfg.voltage_step / 2, cfg.voltage_step)

    cycles = np.arange(n_phase * thresholds.size).reshape(thresholds.size, n_phase)
    strobe_times = t_origin + cycles * period + phases[None, :]
    voltages = np.asarray(periodic_source(strobe_times.reshape(-1)), dtype=float).reshape(strobe_times.shape)
    decisions = voltages >= thresholds[:, None]

    hits = decisions.any(axis=0)
    saturated = decisions[-1] | ~hits
    if saturated.any():
        k = int(np.flatnonzero(saturated)[0])
        side = "상한" if decisions[-1, k] else "하한"
        raise OutOfRange(
            f"위상 {phases[k]:.1f} ps 의 전압이 스윕 {side}을 벗어났습니다: "
            f"[{cfg.sweep_low:.1f}, {cfg.sweep_high:.1f}] mV ({int(saturated.sum())}개 위상)"
        )
    # highest threshold index with a 1
    top = thresholds.size - 1 - np.argmax(decisions[::-1, :], axis=0)
    reconstructed = thresholds[top]
    return Waveform(samples=reconstructed, dt=cfg.strobe_resolution, t0=t_origin)


def compare_capture(expected: BitPattern, got: Capture) -> CaptureComparison:
    if len(expected) != len(got):
        raise ShapeMismatch(f"기대 비트 수({len(expected)})와 캡처 수({len(got)})가 다릅니다.")
    mismatch = np.flatnonzero(expected.bits != got.decisions)
    return CaptureComparison(
        passed=mismatch.size == 0,
        error_count=int(mismatch.size),
        error_positions=[int(i) for i in mismatch],
        n_bits=len(expected),
    )
