from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from core.errors import InvalidPattern, InvalidPolynomial, InvalidSeed, ShapeMismatch

logger = logging.getLogger(__name__)

# Fibonacci tap sets (stage numbers, highest = degree). All are maximal length.
PRBS_TAPS: dict[int, tuple[int, ...]] = {
    3: (3, 2),    # x^3 + x^2 + 1
    7: (7, 6),    # x^7 + x^6 + 1
    9: (9, 5),    # x^9 + x^5 + 1
    11: (11, 9),  # x^11 + x^9 + 1
    15: (15, 14),
    23: (23, 18),
    31: (31, 28),
}

DEFAULT_PRBS_ORDER = 7

FixedKind = Literal["alternating", "all-ones", "all-zeros", "custom"]


@dataclass(slots=True, eq=False)
class BitPattern:
    bits: np.ndarray
    bit_rate: float

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size == 0:
            raise InvalidPattern("비트 패턴이 비어 있습니다.")
        if np.any(bits > 1):
            raise InvalidPattern("비트 패턴에는 0/1 값만 허용됩니다.")
        rate = float(self.bit_rate)
        if not math.isfinite(rate) or rate <= 0:
            raise InvalidPattern(f"bit_rate는 양수여야 합니다: {self.bit_rate}")
        self.bits = bits
        self.bit_rate = rate

    def __len__(self) -> int:
        return int(self.bits.size)

    @property
    def period_ps(self) -> float:
        """Bit period T = 1 / bit_rate, in picoseconds."""
        return 1e12 / self.bit_rate

    @property
    def duration_ps(self) -> float:
        return len(self) * self.period_ps

    def to_list(self) -> list[int]:
        return [int(b) for b in self.bits]


@dataclass(frozen=True, slots=True)
class LfsrSpec:
    """Fibonacci LFSR: stage n is the output tap, feedback XORs the tap stages and shifts in at stage 1."""

    taps: tuple[int, ...]
    seed: int

    def __post_init__(self) -> None:
        taps = tuple(sorted({int(t) for t in self.taps}, reverse=True))
        if not taps:
            raise InvalidPolynomial("LFSR 탭 집합이 비어 있습니다.")
        if taps[-1] < 1:
            raise InvalidPolynomial(f"탭 위치는 1 이상이어야 합니다: {self.taps}")
        if taps[0] < 2:
            raise InvalidPolynomial(f"LFSR 차수는 2 이상이어야 합니다: {self.taps}")
        object.__setattr__(self, "taps", taps)
        seed = int(self.seed)
        if seed == 0:
            raise InvalidSeed("LFSR seed는 0이 될 수 없습니다.")
        if seed < 0 or seed >= (1 << taps[0]):
            raise InvalidSeed(f"seed가 {taps[0]}비트 범위를 벗어났습니다: {seed}")
        object.__setattr__(self, "seed", seed)

    @property
    def degree(self) -> int:
        return self.taps[0]


def prbs_spec(order: int = DEFAULT_PRBS_ORDER, seed: int | None = None) -> LfsrSpec:
    """Build the standard maximal-length spec for `order`; seed defaults to all ones."""
    taps = PRBS_TAPS.get(int(order))
    if taps is None:
        raise InvalidPolynomial(f"지원하지 않는 PRBS 차수입니다: {order} (지원: {sorted(PRBS_TAPS)})")
    if seed is None:
        seed = (1 << int(order)) - 1
    return LfsrSpec(taps=taps, seed=seed)


def _step(state: int, taps: tuple[int, ...], mask: int) -> int:
    feedback = 0
    for tap in taps:
        feedback ^= (state >> (tap - 1)) & 1
    return ((state << 1) | feedback) & mask


def prbs_generate(spec: LfsrSpec, n_bits: int, rate: float) -> BitPattern:
    """Return the first `n_bits` of the LFSR output stream (output = stage n before each shift)."""
    if n_bits < 1:
        raise InvalidPattern(f"n_bits는 1 이상이어야 합니다: {n_bits}")
    n = spec.degree
    mask = (1 << n) - 1
    out_shift = n - 1
    state = spec.seed
    bits = np.empty(int(n_bits), dtype=np.uint8)
    for i in range(int(n_bits)):
        bits[i] = (state >> out_shift) & 1
        state = _step(state, spec.taps, mask)
    return BitPattern(bits=bits, bit_rate=rate)


def lfsr_period(spec: LfsrSpec) -> int:
    """Count steps until the register returns to its seed state (brute-force enumeration)."""
    n = spec.degree
    mask = (1 << n) - 1
    state = _step(spec.seed, spec.taps, mask)
    period = 1
    limit = 1 << n
    while state != spec.seed:
        state = _step(state, spec.taps, mask)
        period += 1
        if period > limit:
            # seed never recurs; the register fell into a cycle not containing it
            raise InvalidPolynomial(f"seed 상태로 돌아오지 않는 탭 구성입니다: {spec.taps}")
    return period


def is_maximal_length(spec: LfsrSpec) -> bool:
    return lfsr_period(spec) == (1 << spec.degree) - 1


def fixed_pattern(
    kind: FixedKind,
    n_bits: int,
    rate: float,
    bits: Sequence[int] | None = None,
) -> BitPattern:
    """Deterministic fixed patterns; `custom` repeats the given bits cyclically to `n_bits`."""
    if n_bits < 1:
        raise InvalidPattern(f"n_bits는 1 이상이어야 합니다: {n_bits}")
    if kind == "alternating":
        values = np.arange(n_bits) % 2 == 0
    elif kind == "all-ones":
        values = np.ones(n_bits, dtype=bool)
    elif kind == "all-zeros":
        values = np.zeros(n_bits, dtype=bool)
    elif kind == "custom":
        if not bits:
            raise InvalidPattern("custom 패턴에는 비트가 하나 이상 필요합니다.")
        values = np.resize(np.asarray(list(bits), dtype=np.uint8), n_bits)
    else:
        raise InvalidPattern(f"알 수 없는 고정 패턴 종류입니다: {kind}")
    return BitPattern(bits=np.asarray(values, dtype=np.uint8), bit_rate=rate)


@dataclass(slots=True, eq=False)
class VortexFrame:
    data_channels: list[BitPattern]
    clock_channel: BitPattern
    frame_channel: BitPattern
    header_channels: list[BitPattern]
    header_bits: tuple[int, ...] = field(default=())

    @property
    def word_length(self) -> int:
        return len(self.data_channels[0])

    @property
    def data_period_ps(self) -> float:
        return self.data_channels[0].period_ps

    @property
    def burst_duration_ps(self) -> float:
        return self.word_length * self.data_period_ps

    @property
    def frame_duration_ps(self) -> float:
        """Assertion interval of the frame bit: the ones in the frame channel times its period."""
        return float(self.frame_channel.bits.sum()) * self.frame_channel.period_ps


def build_vortex_frame(
    data_words: Sequence[Sequence[int]],
    header_bits: Sequence[int],
    data_rate: float,
    frame_rate_divisor: int = 8,
) -> VortexFrame:
    """Lay out one Data Vortex packet: 4 data words, source-synchronous clock, frame and header lines.

    The frame line is a single bit whose period equals the burst, so its assertion covers the data
    exactly. Header lines run at data_rate / frame_rate_divisor and hold their address bit for the
    whole burst (rounded up to whole header bits).
    """
    if len(data_words) != 4:
        raise ShapeMismatch(f"데이터 워드는 4개여야 합니다: {len(data_words)}")
    if len(header_bits) != 4:
        raise ShapeMismatch(f"헤더 비트는 4개여야 합니다: {len(header_bits)}")
    lengths = {len(w) for w in data_words}
    if len(lengths) != 1:
        raise ShapeMismatch(f"데이터 워드 길이가 서로 다릅니다: {[len(w) for w in data_words]}")
    if frame_rate_divisor < 1:
        raise InvalidPattern(f"frame_rate_divisor는 1 이상이어야 합니다: {frame_rate_divisor}")

    word_length = lengths.pop()
    data_channels = [BitPattern(bits=list(w), bit_rate=data_rate) for w in data_words]
    clock = fixed_pattern("alternating", word_length, data_rate)
    frame = BitPattern(bits=[1], bit_rate=data_rate / word_length)

    header_rate = data_rate / frame_rate_divisor
    header_len = math.ceil(word_length / frame_rate_divisor)
    headers = [
        fixed_pattern("all-ones" if int(b) else "all-zeros", header_len, header_rate)
        for b in header_bits
    ]
    return VortexFrame(
        data_channels=data_channels,
        clock_channel=clock,
        frame_channel=frame,
        header_channels=headers,
        header_bits=tuple(int(b) for b in header_bits),
    )


@dataclass(slots=True, eq=False)
class VortexTrain:
    """Per-line bit streams of a repeated packet sequence, plus the frames it was built from."""

    channels: dict[str, BitPattern]
    frames: list[VortexFrame]
    word_length: int


DATA_CHANNELS = ("data0", "data1", "data2", "data3")
HEADER_CHANNELS = ("header0", "header1", "header2", "header3")


def vortex_packet_train(
    data_streams: Sequence[BitPattern],
    header_bits: Sequence[int],
    data_rate: float,
    word_length: int = 32,
    frame_rate_divisor: int = 8,
) -> VortexTrain:
    """Repeat Vortex packets: a `word_length` burst (frame high) then an equal guard (frame low).

    Data lines carry their streams continuously. Header lines alternate between the configured
    address and its complement on odd packets.
    """
    if len(data_streams) != 4:
        raise ShapeMismatch(f"데이터 스트림은 4개여야 합니다: {len(data_streams)}")
    lengths = {len(s) for s in data_streams}
    if len(lengths) != 1:
        raise ShapeMismatch("데이터 스트림 길이가 서로 다릅니다.")
    packet_bits = 2 * word_length
    total = lengths.pop()
    if total % packet_bits != 0:
        raise ShapeMismatch(f"스트림 길이({total})가 패킷 길이({packet_bits})의 배수가 아닙니다.")
    if packet_bits % frame_rate_divisor != 0:
        raise ShapeMismatch(
            f"패킷 길이({packet_bits})가 frame_rate_divisor({frame_rate_divisor})로 나누어지지 않습니다."
        )

    n_packets = total // packet_bits
    header_per_packet = packet_bits // frame_rate_divisor
    frames: list[VortexFrame] = []
    frame_bits: list[int] = []
    header_lines: list[list[int]] = [[] for _ in range(4)]
    for p in range(n_packets):
        start = p * packet_bits
        words = [s.bits[start : start + word_length] for s in data_streams]
        address = [int(b) ^ (p % 2) for b in header_bits]
        frames.append(build_vortex_frame(words, address, data_rate, frame_rate_divisor))
        frame_bits.extend((1, 0))
        for line, bit in zip(header_lines, address):
            line.extend([bit] * header_per_packet)

    channels: dict[str, BitPattern] = {}
    for name, stream in zip(DATA_CHANNELS, data_streams):
        channels[name] = BitPattern(bits=stream.bits.copy(), bit_rate=data_rate)
    channels["clock"] = fixed_pattern("alternating", total, data_rate)
    channels["frame"] = BitPattern(bits=frame_bits, bit_rate=data_rate / word_length)
    header_rate = data_rate / frame_rate_divisor
    for name, line in zip(HEADER_CHANNELS, header_lines):
        channels[name] = BitPattern(bits=line, bit_rate=header_rate)

    logger.debug("vortex_train packets=%d word_length=%d rate=%.4g", n_packets, word_length, data_rate)
    return VortexTrain(channels=channels, frames=frames, word_length=word_length)
