from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from core.analog_model import Waveform
from core.errors import ClosedEye, InsufficientData, LevelsUnresolved, OutOfRange

logger = logging.getLogger(__name__)

LEVEL_BIN_MV = 5.0
MIN_FOLD_PERIODS = 3
DEFAULT_MAX_TRACES = 4096
# each logic level must hold at least this share of the samples
_MIN_LEVEL_SHARE = 0.05
_BOUNDARY_STEPS = np.array([-1, 0, 1])
_ORDER_PENALTY = 1e6


@dataclass(slots=True, eq=False)
class EyeRecord:
    """One-UI overlay of a waveform.

    `origin` is the absolute time of phase 0. It is placed half a period before the mean crossing,
    so crossings cluster around period / 2 and the eye centre sits at phase 0.

    `crossing_times` holds the folded phases in [0, period). `crossing_offsets` holds the same
    crossings measured from their own bit boundary, shifted by period / 2; they are not wrapped, so an
    edge more than half a UI late stays late instead of reappearing early.
    """

    period: float
    traces: np.ndarray
    trace_phases: np.ndarray
    crossing_times: np.ndarray
    crossing_rising: np.ndarray
    origin: float
    threshold: float
    crossing_offsets: np.ndarray | None = None

    @property
    def n_crossings(self) -> int:
        return int(self.crossing_times.size)


@dataclass(slots=True)
class EyeMetrics:
    jitter_pp: float
    jitter_rms: float
    eye_opening_ui: float
    eye_height: float
    rise_2080: float | None
    fall_2080: float | None
    v_high: float
    v_low: float
    amplitude: float
    threshold: float
    crossings: int
    eye_closed: bool = False

    def to_dict(self) -> dict[str, float | int | bool | None]:
        return {
            "jitter_pp_ps": self.jitter_pp,
            "jitter_rms_ps": self.jitter_rms,
            "eye_opening_ui": self.eye_opening_ui,
            "eye_height_mv": self.eye_height,
            "rise_2080_ps": self.rise_2080,
            "fall_2080_ps": self.fall_2080,
            "v_high_mv": self.v_high,
            "v_low_mv": self.v_low,
            "amplitude_mv": self.amplitude,
            "threshold_mv": self.threshold,
            "crossings": self.crossings,
            "eye_closed": self.eye_closed,
        }


def find_crossings(w: Waveform, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Threshold crossing times (linear interpolation) and their direction (True = rising).

    A sample equal to the threshold counts as above it.
    """
    s = w.samples
    above = s >= threshold
    idx = np.flatnonzero(above[1:] != above[:-1])
    if idx.size == 0:
        return np.empty(0), np.empty(0, dtype=bool)
    s0 = s[idx]
    s1 = s[idx + 1]
    frac = (threshold - s0) / (s1 - s0)
    times = w.t0 + w.dt * (idx + frac)
    return times, above[idx + 1]


def _circular_mean_phase(times: np.ndarray, period: float) -> float:
    angles = 2 * np.pi * np.mod(times, period) / period
    mean_angle = math.atan2(float(np.sin(angles).mean()), float(np.cos(angles).mean()))
    return (mean_angle % (2 * math.pi)) * period / (2 * math.pi)


def _boundary_offsets(rel: np.ndarray) -> np.ndarray:
    """Distance of each crossing from the bit boundary it belongs to, in UI.

    `rel` is crossing time in UI from the nominal boundary grid. Each crossing takes the nearest
    boundary or one of its neighbours, and boundary indices must rise strictly in time order; the
    assignment minimises the summed squared distance (Viterbi over three candidates per crossing).
    """
    n = rel.size
    if n == 0:
        return np.empty(0)
    cand = np.rint(rel).astype(np.int64)[:, None] + _BOUNDARY_STEPS[None, :]
    cost = (rel[:, None] - cand) ** 2
    back = np.zeros((n, _BOUNDARY_STEPS.size), dtype=np.int64)
    cols = np.arange(_BOUNDARY_STEPS.size)
    acc = cost[0].copy()
    for k in range(1, n):
        trans = acc[:, None] + _ORDER_PENALTY * (cand[k][None, :] <= cand[k - 1][:, None])
        back[k] = np.argmin(trans, axis=0)
        acc = trans[back[k], cols] + cost[k]

    path = np.empty(n, dtype=np.int64)
    j = int(np.argmin(acc))
    for k in range(n - 1, -1, -1):
        path[k] = cand[k, j]
        j = int(back[k, j])
    return rel - path


def fold_eye(
    w: Waveform,
    period: float,
    threshold: float,
    *,
    max_traces: int | None = DEFAULT_MAX_TRACES,
) -> EyeRecord:
    """Cut the waveform into one-period traces and phase-fold its threshold crossings."""
    if period <= 0:
        raise InsufficientData(f"period는 양수여야 합니다: {period}")
    if w.span < MIN_FOLD_PERIODS * period:
        raise InsufficientData(
            f"파형 길이 {w.span:.1f} ps 가 {MIN_FOLD_PERIODS} 주기({MIN_FOLD_PERIODS * period:.1f} ps)보다 짧습니다."
        )

    times, rising = find_crossings(w, threshold)
    if times.size:
        origin = _circular_mean_phase(times, period) - period / 2
    else:
        origin = w.t0
    phases = np.mod(times - origin, period)
    offsets = period / 2 + period * _boundary_offsets((times - origin - period / 2) / period)

    first = math.ceil((w.t0 - origin) / period - 1e-9)
    last = math.floor((w.t_end - origin) / period + 1e-9) - 1
    starts = origin + period * np.arange(first, last + 1)
    if max_traces is not None:
        starts = starts[:max_traces]
    n_cols = max(1, int(math.floor(period / w.dt + 1e-9)))
    trace_phases = w.dt * np.arange(n_cols)
    if starts.size:
        traces = w.value_at(starts[:, None] + trace_phases[None, :])
    else:
        traces = np.empty((0, n_cols))

    logger.debug("fold_eye period=%.4g crossings=%d traces=%d", period, times.size, starts.size)
    return EyeRecord(
        period=float(period),
        traces=traces,
        trace_phases=trace_phases,
        crossing_times=phases,
        crossing_rising=rising,
        origin=float(origin % period),
        threshold=float(threshold),
        crossing_offsets=offsets,
    )


def crossover_jitter(eye: EyeRecord) -> tuple[float, float]:
    """Peak-to-peak and rms (population standard deviation) of the crossing phases.

    Uses the unwrapped boundary offsets when the record has them.
    """
    phases = eye.crossing_offsets if eye.crossing_offsets is not None else eye.crossing_times
    if phases.size < 2:
        raise InsufficientData(f"교차점이 2개 이상 필요합니다: {phases.size}")
    return float(phases.max() - phases.min()), float(phases.std())


def eye_opening(period: float, jitter_pp: float) -> float:
    if period <= 0 or jitter_pp < 0:
        raise OutOfRange(f"period는 양수, jitter_pp는 0 이상이어야 합니다: period={period}, jitter_pp={jitter_pp}")
    if jitter_pp > period:
        raise ClosedEye(f"p-p 지터 {jitter_pp:.2f} ps 가 UI {period:.2f} ps 를 초과합니다.")
    return 1.0 - jitter_pp / period


def _settled_value(in_bin: np.ndarray) -> float:
    # a settled level repeats bit-for-bit; edge tails never do
    values, counts = np.unique(in_bin, return_counts=True)
    top = int(np.argmax(counts))
    if counts[top] > 1 and counts[top] >= _MIN_LEVEL_SHARE * in_bin.size:
        return float(values[top])
    return float(np.median(in_bin))


def measure_levels(w: Waveform, bin_width: float = LEVEL_BIN_MV) -> tuple[float, float, float]:
    """Modal high and low levels from a voltage histogram.

    Inside the modal bin the most repeated sample wins; with no repeats the bin median is used.
    """
    s = w.samples
    v_min, v_max = float(s.min()), float(s.max())
    if v_max - v_min < 2 * bin_width:
        raise LevelsUnresolved(f"전압 분포 폭 {v_max - v_min:.2f} mV 로는 두 레벨을 구분할 수 없습니다.")

    # bins centred on multiples of bin_width
    lo_edge = (math.floor(v_min / bin_width) - 0.5) * bin_width
    hi_edge = (math.ceil(v_max / bin_width) + 0.5) * bin_width
    n_bins = int(round((hi_edge - lo_edge) / bin_width))
    counts, edges = np.histogram(s, bins=n_bins, range=(lo_edge, hi_edge))
    centres = (edges[:-1] + edges[1:]) / 2
    split = (v_max + v_min) / 2

    levels: list[float] = []
    for half in (centres < split, centres >= split):
        half_counts = np.where(half, counts, 0)
        if half_counts.sum() < _MIN_LEVEL_SHARE * s.size:
            raise LevelsUnresolved("전압 분포가 이봉형이 아닙니다.")
        k = int(np.argmax(half_counts))
        in_bin = s[(s >= edges[k]) & (s < edges[k + 1])]
        levels.append(_settled_value(in_bin))
    v_low, v_high = levels
    return v_high, v_low, (v_high + v_low) / 2


def measure_transition_time(
    w: Waveform,
    low_frac: float = 0.2,
    high_frac: float = 0.8,
) -> tuple[float | None, float | None]:
    """Mean low->high and high->low reference-crossing intervals.

    A rise is a rising low-reference crossing followed directly by a rising high-reference crossing;
    falls are the mirror image. A direction with no qualifying transition comes back as None.
    """
    if not 0 < low_frac < high_frac < 1:
        raise OutOfRange(f"기준 비율이 올바르지 않습니다: {low_frac}, {high_frac}")
    try:
        v_high, v_low, _ = measure_levels(w)
    except LevelsUnresolved as exc:
        raise InsufficientData(f"전이 시간을 잴 수 있는 레벨이 없습니다: {exc}") from exc
    swing = v_high - v_low
    lo_t, lo_up = find_crossings(w, v_low + low_frac * swing)
    hi_t, hi_up = find_crossings(w, v_low + high_frac * swing)

    # event codes: 0 lo_up, 1 lo_down, 2 hi_up, 3 hi_down
    times = np.concatenate([lo_t, hi_t])
    codes = np.concatenate([np.where(lo_up, 0, 1), np.where(hi_up, 2, 3)])
    order = np.argsort(times, kind="stable")
    times, codes = times[order], codes[order]

    prev_code, next_code = codes[:-1], codes[1:]
    gaps = np.diff(times)
    rises = gaps[(prev_code == 0) & (next_code == 2)]
    falls = gaps[(prev_code == 3) & (next_code == 1)]
    if rises.size == 0 and falls.size == 0:
        raise InsufficientData("20-80 % 구간을 온전히 지나는 전이가 없습니다.")
    rise = float(rises.mean()) if rises.size else None
    fall = float(falls.mean()) if falls.size else None
    return rise, fall


def _eye_height(w: Waveform, eye: EyeRecord) -> float:
    period = eye.period
    first = math.ceil((w.t0 - eye.origin) / period)
    last = math.floor((w.t_end - eye.origin) / period)
    if last < first:
        return 0.0
    centres = eye.origin + period * np.arange(first, last + 1)
    values = w.value_at(centres)
    ones = values[values >= eye.threshold]
    zeros = values[values < eye.threshold]
    if ones.size == 0 or zeros.size == 0:
        return 0.0
    return max(0.0, float(ones.min() - zeros.max()))


def analyze_eye(w: Waveform, period: float, threshold: float | None = None) -> EyeMetrics:
    """Fold the waveform at `period` and compute every eye figure of merit.

    The crossover threshold defaults to the measured midpoint. An eye whose p-p jitter exceeds the
    unit interval reports 0 UI with `eye_closed` set.
    """
    v_high, v_low, midpoint = measure_levels(w)
    if threshold is None:
        threshold = midpoint
    eye = fold_eye(w, period, threshold)
    jitter_pp, jitter_rms = crossover_jitter(eye)
    closed = False
    try:
        opening = eye_opening(period, jitter_pp)
    except ClosedEye:
        opening, closed = 0.0, True
    try:
        rise, fall = measure_transition_time(w)
    except InsufficientData:
        rise, fall = None, None

    metrics = EyeMetrics(
        jitter_pp=jitter_pp,
        jitter_rms=jitter_rms,
        eye_opening_ui=opening,
        eye_height=_eye_height(w, eye),
        rise_2080=rise,
        fall_2080=fall,
        v_high=v_high,
        v_low=v_low,
        amplitude=v_high - v_low,
        threshold=float(threshold),
        crossings=eye.n_crossings,
        eye_closed=closed,
    )
    logger.info(
        "eye period=%.4g crossings=%d jitter_pp=%.3f opening_ui=%.4f",
        period,
        metrics.crossings,
        jitter_pp,
        opening,
    )
    return metrics


def eye_histogram(eye: EyeRecord, voltage_bin: float = LEVEL_BIN_MV) -> pd.DataFrame:
    """Occupancy of the eye: one row per (phase column, voltage bin) with a non-zero count."""
    columns = ["phase_ps", "voltage_mv", "count"]
    if eye.traces.size == 0:
        return pd.DataFrame(columns=columns)
    bins = np.floor(eye.traces / voltage_bin).astype(np.int64)
    n_traces, n_cols = bins.shape
    frame = pd.DataFrame(
        {
            "phase_ps": np.tile(eye.trace_phases, n_traces),
            "voltage_mv": bins.reshape(-1) * voltage_bin,
        }
    )
    table = frame.groupby(["phase_ps", "voltage_mv"], sort=True).size().reset_index(name="count")
    return table[columns]
