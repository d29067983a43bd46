from __future__ import annotations

import numpy as np
import pytest

from core.analog_model import JitterConfig, LevelConfig, Waveform
from core.errors import OutOfRange, QuantizationError, RangeExceeded, ShapeMismatch
from core.pattern_gen import BitPattern, fixed_pattern
from core.sampler import (
    Capture,
    SamplerConfig,
    compare_capture,
    equivalent_time_scan,
    periodic_source_from_waveform,
    strobe_sample,
)

CFG = SamplerConfig(threshold=2000.0)


def _centres(n_bits: int, period: float) -> np.ndarray:
    return np.arange(n_bits) * period + period / 2


class TestStrobeSample:
    def test_constant_high(self):
        w = Waveform(samples=np.full(1001, 2400.0))
        capture = strobe_sample(w, np.arange(0, 1001, 10), CFG)
        assert np.all(capture.decisions == 1)

    def test_threshold_counts_as_one(self, render_bits):
        w = render_bits([0, 1], 2.5e9)
        assert strobe_sample(w, [400.0], CFG).decisions.tolist() == [1]

    def test_prbs_bit_centres_recover_bits(self, render_bits, prbs7):
        pattern = prbs7(508, 5e9)
        w = render_bits(pattern.bits, 5e9)
        capture = strobe_sample(w, _centres(len(pattern), 200.0), CFG)
        assert np.array_equal(capture.decisions, pattern.bits)

    def test_unquantized_strobe(self, render_bits):
        w = render_bits([1, 0], 1e9)
        with pytest.raises(QuantizationError):
            strobe_sample(w, [105.0], CFG)

    def test_strobe_outside_span(self, render_bits):
        w = render_bits([1, 0], 1e9)
        with pytest.raises(OutOfRange):
            strobe_sample(w, [2010.0], CFG)

    def test_monotone_in_threshold(self, render_bits, prbs7):
        pattern = prbs7(254, 5e9)
        w = render_bits(pattern.bits, 5e9)
        times = np.arange(0, 254 * 200, 10.0)
        low = strobe_sample(w, times, SamplerConfig(threshold=1800.0)).decisions
        high = strobe_sample(w, times, SamplerConfig(threshold=2200.0)).decisions
        assert np.all(high <= low)

    def test_aperture_jitter_is_seeded(self, render_bits, prbs7):
        pattern = prbs7(254, 5e9)
        w = render_bits(pattern.bits, 5e9)
        cfg = SamplerConfig(threshold=2000.0, aperture_jitter=JitterConfig(rj_rms=5.0, seed=3))
        first = strobe_sample(w, _centres(254, 200.0), cfg)
        second = strobe_sample(w, _centres(254, 200.0), cfg)
        assert np.array_equal(first.decisions, second.decisions)
        assert np.array_equal(first.decisions, pattern.bits)


class TestEquivalentTimeScan:
    def test_reconstructs_clock_within_one_step(self, render_bits):
        levels = LevelConfig(t_rise_2080=30.0, t_fall_2080=30.0)
        # 200 ps clock period: bits at 10 Gbps
        w = render_bits([1, 0] * 20, 1e10, levels, dt=1.0)
        source = periodic_source_from_waveform(w, 200.0)
        rebuilt = equivalent_time_scan(source, 200.0, CFG)
        assert len(rebuilt) == 20
        assert rebuilt.dt == 10.0
        truth = source(rebuilt.times)
        assert np.max(np.abs(rebuilt.samples - truth)) <= CFG.voltage_step
        assert np.all(rebuilt.samples <= truth + 1e-6)

    def test_constant_source(self):
        rebuilt = equivalent_time_scan(lambda t: np.full(np.shape(t), 2100.0), 500.0, CFG)
        assert np.all(rebuilt.samples == rebuilt.samples[0])
        assert abs(rebuilt.samples[0] - 2100.0) <= CFG.voltage_step

    def test_levels_above_default_sweep(self, render_bits):
        levels = LevelConfig(v_high=3300.0, v_low=2500.0, t_rise_2080=30.0, t_fall_2080=30.0)
        source = periodic_source_from_waveform(render_bits([1, 0] * 20, 1e10, levels, dt=1.0), 200.0)
        with pytest.raises(OutOfRange):
            equivalent_time_scan(source, 200.0, CFG)
        cfg = SamplerConfig(threshold=2900.0, sweep_low=2000.0, sweep_high=3500.0)
        rebuilt = equivalent_time_scan(source, 200.0, cfg)
        truth = source(rebuilt.times)
        assert np.max(np.abs(rebuilt.samples - truth)) <= cfg.voltage_step
        assert rebuilt.samples.max() > 3290.0

    def test_source_below_sweep_floor(self):
        with pytest.raises(OutOfRange):
            equivalent_time_scan(lambda t: np.full(np.shape(t), 900.0), 500.0, CFG)

    def test_period_beyond_range(self):
        with pytest.raises(RangeExceeded):
            equivalent_time_scan(lambda t: np.zeros(np.shape(t)), 10_500.0, CFG)

    def test_periodic_source_wraps(self):
        w = Waveform(samples=np.arange(11.0) * 100.0, dt=10.0)
        source = periodic_source_from_waveform(w, 100.0)
        assert source(np.array([5.0, 105.0, 1005.0])).tolist() == pytest.approx([50.0, 50.0, 50.0])


class TestCompareCapture:
    def test_identical(self):
        expected = fixed_pattern("custom", 6, 1e9, [1, 0, 0, 1, 1, 0])
        got = Capture(strobe_times=np.arange(6) * 1000.0 + 500.0, decisions=expected.bits.copy())
        result = compare_capture(expected, got)
        assert result.passed and result.error_count == 0

    def test_one_flip(self):
        expected = fixed_pattern("alternating", 8, 1e9)
        decisions = expected.bits.copy()
        decisions[5] ^= 1
        result = compare_capture(expected, Capture(np.arange(8) * 10.0, decisions))
        assert not result.passed
        assert (result.error_count, result.error_positions) == (1, [5])

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            compare_capture(BitPattern([1, 0, 1], 1e9), Capture(np.arange(2) * 10.0, [1, 0]))


def test_sampler_config_invariants():
    with pytest.raises(RangeExceeded):
        SamplerConfig(strobe_resolution=10.0, strobe_range=5.0)
    with pytest.raises(QuantizationError):
        SamplerConfig(strobe_resolution=0.0)
    with pytest.raises(OutOfRange):
        SamplerConfig(sweep_low=3000.0, sweep_high=1000.0)
