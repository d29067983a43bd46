from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from core.errors import (
    EdgeCollision,
    InvalidEdgeSequence,
    QuantizationError,
    RangeExceeded,
    ShapeMismatch,
    UnsupportedFanIn,
)
from core.pattern_gen import BitPattern

SUPPORTED_FAN_IN = (2, 8)
DEFAULT_RESOLUTION_PS = 10.0
DEFAULT_RANGE_PS = 10_000.0

_GRID_TOL = 1e-6


class EdgeDirection(str, enum.Enum):
    RISING = "rising"
    FALLING = "falling"


@dataclass(slots=True, eq=False)
class EdgeSequence:
    """Transitions of a line that idles low: directions alternate starting with a rising edge."""

    times: np.ndarray
    rising: np.ndarray
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float).reshape(-1)
        rising = np.asarray(self.rising, dtype=bool).reshape(-1)
        if times.shape != rising.shape:
            raise InvalidEdgeSequence("에지 시간과 방향의 개수가 다릅니다.")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise EdgeCollision("에지 시간이 엄격하게 증가하지 않습니다.")
        expected = np.arange(times.size) % 2 == 0
        if not np.array_equal(rising, expected):
            raise InvalidEdgeSequence("에지 방향이 상승/하강으로 번갈아 나타나야 합니다.")
        if times.size and (times[0] < self.t_start or times[-1] > self.t_end):
            raise InvalidEdgeSequence(
                f"에지가 유효 구간 [{self.t_start}, {self.t_end}] ps 밖에 있습니다."
            )
        self.times = times
        self.rising = rising
        self.t_start = float(self.t_start)
        self.t_end = float(self.t_end)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def transition_count(self) -> int:
        return int(self.times.size)

    @property
    def edges(self) -> Iterator[tuple[float, EdgeDirection]]:
        for t, up in zip(self.times, self.rising):
            yield float(t), EdgeDirection.RISING if up else EdgeDirection.FALLING


@dataclass(frozen=True, slots=True)
class EdgeProgram:
    leading_delay: float = 0.0
    trailing_delay: float = 0.0
    resolution: float = DEFAULT_RESOLUTION_PS
    range: float = DEFAULT_RANGE_PS

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise QuantizationError(f"resolution은 양수여야 합니다: {self.resolution}")
        if self.range < self.resolution:
            raise RangeExceeded(f"range({self.range})가 resolution({self.resolution})보다 작습니다.")
        for name in ("leading_delay", "trailing_delay"):
            value = getattr(self, name)
            if value < 0 or value > self.range:
                raise RangeExceeded(f"{name}={value} ps 가 0~{self.range} ps 범위를 벗어났습니다.")
            if not on_grid(value, self.resolution):
                raise QuantizationError(f"{name}={value} ps 가 {self.resolution} ps 격자에 있지 않습니다.")

    @classmethod
    def from_requested(
        cls,
        leading: float = 0.0,
        trailing: float = 0.0,
        *,
        resolution: float = DEFAULT_RESOLUTION_PS,
        range: float = DEFAULT_RANGE_PS,
    ) -> "EdgeProgram":
        grid = cls(resolution=resolution, range=range)
        return cls(
            leading_delay=quantize_delay(leading, grid),
            trailing_delay=quantize_delay(trailing, grid),
            resolution=resolution,
            range=range,
        )


def on_grid(value: float, resolution: float) -> bool:
    ratio = value / resolution
    return abs(ratio - round(ratio)) <= _GRID_TOL


def quantize_delay(requested: float, program: EdgeProgram) -> float:
    """Round to the nearest multiple of the resolution; exact ties go toward zero."""
    if requested < 0:
        raise RangeExceeded(f"요청 지연은 0 이상이어야 합니다: {requested} ps")
    if requested > program.range:
        raise RangeExceeded(f"요청 지연 {requested} ps 가 범위 {program.range} ps 를 초과합니다.")
    steps = math.ceil(round(requested / program.resolution - 0.5, 9))
    quantized = steps * program.resolution
    while quantized > program.range:
        quantized -= program.resolution
    return float(quantized)


def _check_same_shape(channels: Sequence[BitPattern]) -> None:
    if len({len(ch) for ch in channels}) != 1:
        raise ShapeMismatch(f"채널 길이가 서로 다릅니다: {[len(ch) for ch in channels]}")
    rates = [ch.bit_rate for ch in channels]
    if any(not math.isclose(r, rates[0], rel_tol=1e-12) for r in rates):
        raise ShapeMismatch(f"채널 속도가 서로 다릅니다: {rates}")


def mux_stage(channels: Sequence[BitPattern], order: Sequence[int] | None = None) -> BitPattern:
    """Interleave `channels` bit by bit; output bit i = channel order[i mod n], bit i div n.

    The default order is round-robin starting with channel 0.
    """
    count = len(channels)
    if count not in SUPPORTED_FAN_IN:
        raise UnsupportedFanIn(f"지원하지 않는 다중화 입력 수입니다: {count} (지원: {SUPPORTED_FAN_IN})")
    _check_same_shape(channels)
    if order is None:
        order = range(count)
    order = list(order)
    if sorted(order) != list(range(count)):
        raise ShapeMismatch(f"interleave 순서는 0..{count - 1}의 순열이어야 합니다: {order}")
    stacked = np.stack([channels[i].bits for i in order], axis=1)
    return BitPattern(bits=stacked.reshape(-1), bit_rate=channels[0].bit_rate * count)


def demux_stage(stream: BitPattern, count: int) -> list[BitPattern]:
    """Inverse of round-robin `mux_stage`: channel k gets bits k, k + count, k + 2*count, ..."""
    if count < 1:
        raise UnsupportedFanIn(f"역다중화 출력 수는 1 이상이어야 합니다: {count}")
    if len(stream) % count != 0:
        raise ShapeMismatch(f"스트림 길이 {len(stream)}가 {count}로 나누어지지 않습니다.")
    lanes = stream.bits.reshape(-1, count)
    rate = stream.bit_rate / count
    return [BitPattern(bits=lanes[:, k].copy(), bit_rate=rate) for k in range(count)]


def two_stage_mux(lanes: Sequence[BitPattern]) -> BitPattern:
    """Sixteen DLC lanes -> two 8:1 groups -> one 2:1 stream (lanes 0-7 feed group 0)."""
    if len(lanes) != 16:
        raise ShapeMismatch(f"2단 다중화에는 16개 레인이 필요합니다: {len(lanes)}")
    groups = [mux_stage(lanes[:8]), mux_stage(lanes[8:])]
    return mux_stage(groups)


def two_stage_demux(stream: BitPattern) -> list[BitPattern]:
    groups = demux_stage(stream, 2)
    return demux_stage(groups[0], 8) + demux_stage(groups[1], 8)


def place_edges(pattern: BitPattern, program: EdgeProgram) -> EdgeSequence:
    """Turn bit values into timed transitions on a line that idles low before bit 0.

    Nominal boundary of bit k is k*T; rising edges are offset by the leading delay and falling edges
    by the trailing delay.
    """
    for name in ("leading_delay", "trailing_delay"):
        if not on_grid(getattr(program, name), program.resolution):
            raise QuantizationError(f"{name}가 양자화되지 않았습니다.")
    period = pattern.period_ps
    bits = pattern.bits.astype(np.int8)
    previous = np.concatenate(([0], bits[:-1]))
    change = np.flatnonzero(bits != previous)
    rising = bits[change] == 1
    times = change * period + np.where(rising, program.leading_delay, program.trailing_delay)
    if times.size > 1 and np.any(np.diff(times) <= 0):
        bad = int(np.flatnonzero(np.diff(times) <= 0)[0])
        raise EdgeCollision(
            f"지연 설정으로 에지 순서가 뒤바뀝니다: {times[bad]:.1f} ps >= {times[bad + 1]:.1f} ps"
        )
    t_end = len(pattern) * period + max(program.leading_delay, program.trailing_delay)
    return EdgeSequence(times=times, rising=rising, t_start=0.0, t_end=t_end)
