from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter, lfilter_zi
from scipy.special import ndtr, ndtri

from core.errors import (
    EdgeCollision,
    InvalidChannel,
    InvalidJitter,
    InvalidLevels,
    InvalidWaveform,
    ResolutionTooCoarse,
)
from core.serializer import EdgeSequence

logger = logging.getLogger(__name__)

# 20 % -> 80 % of a Gaussian-integral edge spans 2 * ndtri(0.8) standard deviations.
_WIDTH_2080_IN_SIGMA = float(2.0 * ndtri(0.8))
_EDGE_WINDOW_SIGMA = 7.0
_EDGE_CHUNK = 2048


@dataclass(slots=True, eq=False)
class Waveform:
    samples: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float).reshape(-1)
        if samples.size == 0:
            raise InvalidWaveform("파형 샘플이 비어 있습니다.")
        if not self.dt > 0:
            raise InvalidWaveform(f"dt는 양수여야 합니다: {self.dt}")
        if not np.all(np.isfinite(samples)):
            raise InvalidWaveform("파형에 유한하지 않은 전압 값이 있습니다.")
        self.samples = samples
        self.dt = float(self.dt)
        self.t0 = float(self.t0)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.samples.size - 1)

    @property
    def span(self) -> float:
        return self.t_end - self.t0

    def value_at(self, times: np.ndarray) -> np.ndarray:
        """Linear interpolation of the trace at arbitrary times inside the span."""
        return np.interp(np.asarray(times, dtype=float), self.times, self.samples)


@dataclass(frozen=True, slots=True)
class JitterConfig:
    rj_rms: float = 0.0
    dj_pp: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rj_rms < 0 or self.dj_pp < 0:
            raise InvalidJitter(f"지터 값은 0 이상이어야 합니다: rj_rms={self.rj_rms}, dj_pp={self.dj_pp}")

    @property
    def is_zero(self) -> bool:
        return self.rj_rms == 0 and self.dj_pp == 0


@dataclass(frozen=True, slots=True)
class LevelConfig:
    # 3.3 V-referenced PECL defaults; every value is configurable
    v_high: float = 2400.0
    v_low: float = 1600.0
    high_step: float = 100.0
    swing_step: float = 200.0
    t_rise_2080: float = 75.0
    t_fall_2080: float = 75.0
    low_step: float = 100.0
    bias_step: float = 100.0

    def __post_init__(self) -> None:
        if not self.v_high > self.v_low:
            raise InvalidLevels(f"v_high({self.v_high})가 v_low({self.v_low})보다 커야 합니다.")
        if not (self.t_rise_2080 > 0 and self.t_fall_2080 > 0):
            raise InvalidLevels("상승/하강 시간은 양수여야 합니다.")

    @property
    def swing(self) -> float:
        return self.v_high - self.v_low

    @property
    def midpoint(self) -> float:
        return (self.v_high + self.v_low) / 2


@dataclass(frozen=True, slots=True)
class ChannelModel:
    delay: float = 0.0
    attenuation: float = 0.0
    bandwidth: float | None = None  # GHz, single-pole corner

    def __post_init__(self) -> None:
        if self.delay < 0 or self.attenuation < 0:
            raise InvalidChannel(f"채널 지연/감쇠는 0 이상이어야 합니다: delay={self.delay}, attenuation={self.attenuation}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise InvalidChannel(f"bandwidth는 양수여야 합니다: {self.bandwidth}")

    @property
    def is_identity(self) -> bool:
        return self.delay == 0 and self.attenuation == 0 and self.bandwidth is None


def inject_jitter(edges: EdgeSequence, cfg: JitterConfig) -> EdgeSequence:
    """Perturb every edge by Gaussian RJ (sigma = rj_rms) plus uniform DJ spanning dj_pp."""
    if cfg.is_zero or len(edges) == 0:
        return EdgeSequence(
            times=edges.times.copy(), rising=edges.rising.copy(), t_start=edges.t_start, t_end=edges.t_end
        )
    rng = np.random.default_rng(cfg.seed)
    n = len(edges)
    offsets = np.zeros(n)
    if cfg.rj_rms > 0:
        offsets += rng.normal(0.0, cfg.rj_rms, n)
    if cfg.dj_pp > 0:
        offsets += rng.uniform(-cfg.dj_pp / 2, cfg.dj_pp / 2, n)
    times = edges.times + offsets
    if n > 1 and np.any(np.diff(times) <= 0):
        raise EdgeCollision("지터 주입으로 인접 에지의 순서가 뒤바뀌었습니다.")
    return EdgeSequence(
        times=times,
        rising=edges.rising.copy(),
        t_start=min(edges.t_start, float(times[0])),
        t_end=max(edges.t_end, float(times[-1])),
    )


def sigma_for_2080(t_2080: float) -> float:
    """Standard deviation of the Gaussian-integral edge whose 20-80 % width is `t_2080`."""
    return t_2080 / _WIDTH_2080_IN_SIGMA


def render_waveform(edges: EdgeSequence, levels: LevelConfig, dt: float = 1.0) -> Waveform:
    """Render edges into a sampled trace with error-function transitions.

    The trace starts at v_low; each edge adds a Gaussian-integral step whose 20-80 % width is the
    configured rise or fall time. Edges are applied in fixed-size chunks, so the result does not
    depend on how the span is partitioned.
    """
    finest = min(levels.t_rise_2080, levels.t_fall_2080)
    if dt <= 0 or dt > finest / 10:
        raise ResolutionTooCoarse(f"dt={dt} ps 는 전이 시간 {finest} ps 의 1/10 이하여야 합니다.")

    n = int(math.floor((edges.t_end - edges.t_start) / dt + 1e-9)) + 1
    t = edges.t_start + dt * np.arange(n)
    swing = levels.swing

    # ideal NRZ: line is high after an odd number of edges
    count = np.searchsorted(edges.times, t, side="right")
    v = levels.v_low + swing * (count % 2)

    for rising in (True, False):
        mask = edges.rising == rising
        te = edges.times[mask]
        if te.size == 0:
            continue
        sigma = sigma_for_2080(levels.t_rise_2080 if rising else levels.t_fall_2080)
        sign = swing if rising else -swing
        half = int(math.ceil(_EDGE_WINDOW_SIGMA * sigma / dt))
        offsets = np.arange(-half, half + 1)
        for start in range(0, te.size, _EDGE_CHUNK):
            chunk = te[start : start + _EDGE_CHUNK]
            center = np.rint((chunk - edges.t_start) / dt).astype(np.int64)
            idx = center[:, None] + offsets[None, :]
            valid = (idx >= 0) & (idx < n)
            idx_c = np.clip(idx, 0, n - 1)
            x = (t[idx_c] - chunk[:, None]) / sigma
            correction = sign * (ndtr(x) - (x >= 0))
            np.add.at(v, idx_c[valid], correction[valid])

    logger.debug("render edges=%d samples=%d dt=%.3g", len(edges), n, dt)
    return Waveform(samples=v, dt=dt, t0=edges.t_start)


def adjust_levels(
    levels: LevelConfig,
    high_steps: int = 0,
    swing_steps: int = 0,
    *,
    low_steps: int = 0,
    bias_steps: int = 0,
) -> LevelConfig:
    """Step the programmable PECL levels.

    high_steps lowers v_high by high_step each; low_steps raises v_low by low_step each;
    swing_steps shrinks the swing symmetrically about the midpoint by swing_step each;
    bias_steps moves the midpoint up by bias_step each. Negative counts go the other way.
    """
    v_high = levels.v_high - high_steps * levels.high_step
    v_low = levels.v_low + low_steps * levels.low_step
    if swing_steps:
        mid = (v_high + v_low) / 2
        half = (v_high - v_low - swing_steps * levels.swing_step) / 2
        v_high, v_low = mid + half, mid - half
    if bias_steps:
        shift = bias_steps * levels.bias_step
        v_high, v_low = v_high + shift, v_low + shift
    if not v_high > v_low:
        raise InvalidLevels(f"조정 결과 v_high({v_high})가 v_low({v_low}) 이하입니다.")
    return replace(levels, v_high=v_high, v_low=v_low)


def channel_transfer(w: Waveform, ch: ChannelModel) -> Waveform:
    """Delay, attenuate about the trace midpoint, then single-pole low-pass the waveform."""
    samples = w.samples
    if ch.attenuation > 0:
        gain = 10 ** (-ch.attenuation / 20)
        mid = (samples.max() + samples.min()) / 2
        samples = mid + (samples - mid) * gain
    if ch.bandwidth is not None:
        # exact step-invariant discretisation of a one-pole RC
        a = math.exp(-2 * math.pi * ch.bandwidth * 1e9 * w.dt * 1e-12)
        b, den = [1 - a], [1.0, -a]
        zi = lfilter_zi(b, den) * samples[0]
        samples, _ = lfilter(b, den, samples, zi=zi)
    else:
        samples = samples.copy()
    return Waveform(samples=samples, dt=w.dt, t0=w.t0 + ch.delay)
