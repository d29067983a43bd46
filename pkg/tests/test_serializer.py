from __future__ import annotations

import numpy as np
import pytest

from core.errors import (
    EdgeCollision,
    InvalidEdgeSequence,
    QuantizationError,
    RangeExceeded,
    ShapeMismatch,
    UnsupportedFanIn,
)
from core.pattern_gen import BitPattern, fixed_pattern
from core.serializer import (
    EdgeDirection,
    EdgeProgram,
    EdgeSequence,
    demux_stage,
    mux_stage,
    place_edges,
    quantize_delay,
    two_stage_demux,
    two_stage_mux,
)

PROGRAM = EdgeProgram()


class TestQuantizeDelay:
    @pytest.mark.parametrize(
        "requested,expected",
        [(13, 10), (0, 0), (4, 0), (5, 0), (15, 10), (16, 20), (27, 30), (9995, 9990), (9996, 10_000)],
    )
    def test_rounds_to_grid(self, requested, expected):
        assert quantize_delay(requested, PROGRAM) == expected

    @pytest.mark.parametrize("requested", [10_500, -1])
    def test_out_of_range(self, requested):
        with pytest.raises(RangeExceeded):
            quantize_delay(requested, PROGRAM)

    def test_error_never_exceeds_half_resolution(self):
        rng = np.random.default_rng(3)
        for requested in rng.uniform(0, 10_000, 500):
            assert abs(quantize_delay(requested, PROGRAM) - requested) <= 5.0 + 1e-9


class TestEdgeProgram:
    def test_unquantized_delay_rejected(self):
        with pytest.raises(QuantizationError):
            EdgeProgram(leading_delay=13)

    def test_delay_beyond_range_rejected(self):
        with pytest.raises(RangeExceeded):
            EdgeProgram(trailing_delay=10_010)

    def test_from_requested_quantizes(self):
        program = EdgeProgram.from_requested(13, 27)
        assert (program.leading_delay, program.trailing_delay) == (10, 30)


class TestMux:
    def test_eight_lanes_to_2p5g(self):
        lanes = [fixed_pattern("alternating", 16, 312.5e6) for _ in range(8)]
        out = mux_stage(lanes)
        assert out.bit_rate == pytest.approx(2.5e9)
        assert len(out) == 128

    def test_two_streams_to_5g(self):
        out = mux_stage([fixed_pattern("all-ones", 8, 2.5e9), fixed_pattern("all-zeros", 8, 2.5e9)])
        assert out.bit_rate == pytest.approx(5.0e9)
        assert out.to_list() == [1, 0] * 8

    def test_round_robin_from_channel_zero(self):
        lanes = [fixed_pattern("all-ones", 4, 1e8)] + [fixed_pattern("all-zeros", 4, 1e8) for _ in range(7)]
        assert mux_stage(lanes).to_list() == [1, 0, 0, 0, 0, 0, 0, 0] * 4

    def test_custom_order(self):
        lanes = [fixed_pattern("all-ones", 2, 1e9), fixed_pattern("all-zeros", 2, 1e9)]
        assert mux_stage(lanes, order=[1, 0]).to_list() == [0, 1, 0, 1]

    def test_unsupported_fan_in(self):
        with pytest.raises(UnsupportedFanIn):
            mux_stage([fixed_pattern("all-ones", 4, 1e9)] * 3)

    def test_unequal_lengths(self):
        with pytest.raises(ShapeMismatch):
            mux_stage([fixed_pattern("all-ones", 4, 1e9), fixed_pattern("all-ones", 5, 1e9)])

    def test_unequal_rates(self):
        with pytest.raises(ShapeMismatch):
            mux_stage([fixed_pattern("all-ones", 4, 1e9), fixed_pattern("all-ones", 4, 2e9)])


class TestDemux:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        lanes = [BitPattern(rng.integers(0, 2, 16), 312.5e6) for _ in range(8)]
        back = demux_stage(mux_stage(lanes), 8)
        assert all(np.array_equal(a.bits, b.bits) for a, b in zip(lanes, back))
        assert all(b.bit_rate == pytest.approx(312.5e6) for b in back)

    def test_indivisible_length(self):
        with pytest.raises(ShapeMismatch):
            demux_stage(fixed_pattern("alternating", 15, 1e9), 8)

    def test_count_one_is_identity(self):
        stream = fixed_pattern("custom", 9, 1e9, [1, 1, 0])
        (only,) = demux_stage(stream, 1)
        assert np.array_equal(only.bits, stream.bits)
        assert only.bit_rate == stream.bit_rate


class TestTwoStage:
    def test_lane_order_and_round_trip(self):
        rng = np.random.default_rng(1)
        lanes = [BitPattern(rng.integers(0, 2, 8), 312.5e6) for _ in range(16)]
        stream = two_stage_mux(lanes)
        assert stream.bit_rate == pytest.approx(5.0e9)
        # output alternates between the two 8:1 groups
        assert stream.bits[0] == lanes[0].bits[0]
        assert stream.bits[1] == lanes[8].bits[0]
        assert stream.bits[2] == lanes[1].bits[0]
        back = two_stage_demux(stream)
        assert all(np.array_equal(a.bits, b.bits) for a, b in zip(lanes, back))

    def test_needs_sixteen_lanes(self):
        with pytest.raises(ShapeMismatch):
            two_stage_mux([fixed_pattern("all-ones", 4, 1e9)] * 8)


class TestPlaceEdges:
    def test_nominal_boundaries(self):
        edges = place_edges(BitPattern([1, 0], 2.5e9), EdgeProgram())
        assert list(edges.edges) == [(0.0, EdgeDirection.RISING), (400.0, EdgeDirection.FALLING)]
        assert edges.transition_count == 2
        assert edges.t_end == pytest.approx(800.0)

    def test_trailing_delay_offsets_falling_edge(self):
        edges = place_edges(BitPattern([1, 0], 2.5e9), EdgeProgram(trailing_delay=20))
        assert edges.times.tolist() == [0.0, 420.0]
        assert edges.t_end == pytest.approx(820.0)

    def test_leading_delay_offsets_rising_edge(self):
        edges = place_edges(BitPattern([0, 1, 1, 0], 1e9), EdgeProgram(leading_delay=30))
        assert edges.times.tolist() == [1030.0, 3000.0]

    def test_no_transitions(self):
        edges = place_edges(fixed_pattern("all-zeros", 4, 1e9), EdgeProgram())
        assert len(edges) == 0

    def test_reordering_delay_collides(self):
        with pytest.raises(EdgeCollision):
            place_edges(fixed_pattern("alternating", 4, 5e9), EdgeProgram(trailing_delay=210))


class TestEdgeSequence:
    def test_must_start_rising(self):
        with pytest.raises(InvalidEdgeSequence):
            EdgeSequence(times=[10.0], rising=[False], t_start=0.0, t_end=100.0)

    def test_must_be_increasing(self):
        with pytest.raises(EdgeCollision):
            EdgeSequence(times=[10.0, 10.0], rising=[True, False], t_start=0.0, t_end=100.0)

    def test_edges_inside_span(self):
        with pytest.raises(InvalidEdgeSequence):
            EdgeSequence(times=[10.0, 200.0], rising=[True, False], t_start=0.0, t_end=100.0)
