from __future__ import annotations

from pathlib import Path

import pytest

from core.errors import ConfigInvalid, ConfigSyntaxError
from core.scenario import ScenarioConfig, load_scenario, parse_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def _field(data: dict) -> str:
    with pytest.raises(ConfigInvalid) as excinfo:
        parse_scenario(data)
    return excinfo.value.field


class TestParse:
    def test_minimal_loopback_defaults(self):
        cfg = parse_scenario({"kind": "loopback", "data_rate": 5e9})
        assert isinstance(cfg, ScenarioConfig)
        assert cfg.n_bits == 4096
        assert cfg.pattern.kind == "prbs" and cfg.pattern.order == 7
        assert cfg.sampler.threshold == 2000.0
        assert cfg.bit_period_ps == pytest.approx(200.0)

    def test_threshold_follows_level_steps(self):
        cfg = parse_scenario({"kind": "loopback", "data_rate": 1e9, "levels": {"high_steps": 3}})
        assert cfg.sampler.threshold == pytest.approx(1850.0)

    def test_explicit_threshold_kept(self):
        cfg = parse_scenario({"kind": "loopback", "data_rate": 1e9, "sampler": {"threshold": 1900.0}})
        assert cfg.sampler.threshold == 1900.0

    def test_echo_is_plain_json(self):
        cfg = parse_scenario({"kind": "loopback", "data_rate": 1e9, "seed": 4})
        echo = cfg.echo()
        assert echo["seed"] == 4
        assert echo["levels"]["v_high"] == 2400.0

    def test_sweep_bounds_reach_sampler(self):
        cfg = parse_scenario({"kind": "loopback", "data_rate": 1e9, "sampler": {"sweep_low": 2000.0, "sweep_high": 3500.0}})
        sampler = cfg.sampler.config(cfg.sampler.threshold, 0)
        assert (sampler.sweep_low, sampler.sweep_high) == (2000.0, 3500.0)
        assert parse_scenario({"kind": "loopback", "data_rate": 1e9}).sampler.sweep_high == 3000.0

    def test_with_seed(self):
        cfg = parse_scenario({"kind": "loopback", "data_rate": 1e9})
        other = cfg.with_seed(99)
        assert (cfg.seed, other.seed) == (0, 99)


class TestRejections:
    def test_data_rate_above_limit(self):
        assert _field({"kind": "loopback", "data_rate": 6e9}) == "data_rate"

    def test_zero_prbs_seed(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "pattern": {"seed": 0}}) == "pattern.seed"

    def test_unsupported_prbs_order(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "pattern": {"order": 8}}) == "pattern.order"

    def test_unknown_key(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "bogus": 1}) == "bogus"

    def test_unknown_nested_key(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "jitter": {"rj": 1.0}}) == "jitter.rj"

    def test_negative_jitter(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "jitter": {"rj_rms": -1.0}}) == "jitter.rj_rms"

    def test_loopback_bits_multiple_of_lanes(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "n_bits": 100}) == "n_bits"

    def test_vortex_only_on_testbed(self):
        data = {"kind": "loopback", "data_rate": 1e9, "pattern": {"kind": "vortex"}}
        assert _field(data) == "pattern.kind"

    def test_flip_out_of_range(self):
        data = {"kind": "loopback", "data_rate": 1e9, "n_bits": 64, "loopback": {"expected_flips": [64]}}
        assert _field(data) == "loopback.expected_flips"

    def test_site_flips_need_valid_site(self):
        data = {
            "kind": "loopback",
            "data_rate": 1e9,
            "parallel": {"n_sites": 2, "site_expected_flips": {"5": [1]}},
        }
        assert _field(data) == "parallel.site_expected_flips"

    def test_frame_divisor_must_divide_packet(self):
        data = {"kind": "testbed", "data_rate": 2.5e9, "n_bits": 256, "vortex": {"frame_rate_divisor": 3}}
        assert _field(data) == "vortex.frame_rate_divisor"

    def test_testbed_needs_whole_packets(self):
        assert _field({"kind": "testbed", "data_rate": 2.5e9, "n_bits": 300}) == "n_bits"

    def test_testbed_needs_enough_packets(self):
        assert _field({"kind": "testbed", "data_rate": 2.5e9, "n_bits": 128}) == "n_bits"

    def test_vortex_words_shape(self):
        data = {
            "kind": "testbed",
            "data_rate": 2.5e9,
            "n_bits": 256,
            "pattern": {"kind": "vortex"},
            "vortex": {"data_words": [[1, 0] * 16]},
        }
        assert _field(data) == "vortex.data_words"

    def test_render_dt_too_coarse(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "render_dt": 10.0}) == "render_dt"

    def test_delay_beyond_range(self):
        data = {"kind": "loopback", "data_rate": 1e9, "edges": {"leading_delay": 10_500.0}}
        assert _field(data) == "edges"

    def test_collapsed_levels(self):
        assert _field({"kind": "loopback", "data_rate": 1e9, "levels": {"high_steps": 8}}) == "levels"

    def test_custom_pattern_needs_bits(self):
        data = {"kind": "loopback", "data_rate": 1e9, "pattern": {"kind": "fixed", "fixed_kind": "custom"}}
        assert _field(data) == "pattern.bits"

    @pytest.mark.parametrize("kind", ["loopback", "testbed"])
    @pytest.mark.parametrize("fixed_kind", ["all-ones", "all-zeros"])
    def test_constant_fixed_pattern(self, kind, fixed_kind):
        data = {"kind": kind, "data_rate": 2.5e9, "pattern": {"kind": "fixed", "fixed_kind": fixed_kind}}
        assert _field(data) == "pattern.fixed_kind"

    def test_custom_pattern_without_transition(self):
        data = {"kind": "loopback", "data_rate": 1e9, "pattern": {"kind": "fixed", "fixed_kind": "custom", "bits": [1, 1, 1]}}
        assert _field(data) == "pattern.bits"

    def test_sweep_bounds_out_of_order(self):
        data = {"kind": "loopback", "data_rate": 1e9, "sampler": {"sweep_low": 2500.0, "sweep_high": 2500.0}}
        assert _field(data) == "sampler.sweep_high"


class TestLoad:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigSyntaxError):
            load_scenario(tmp_path / "nope.toml")

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("kind = \n", encoding="utf-8")
        with pytest.raises(ConfigSyntaxError):
            load_scenario(path)

    def test_name_defaults_to_stem(self, tmp_path):
        path = tmp_path / "wafer_card.toml"
        path.write_text('kind = "loopback"\ndata_rate = 1e9\n', encoding="utf-8")
        assert load_scenario(path).name == "wafer_card"

    def test_invalid_value_from_file(self, tmp_path):
        path = tmp_path / "fast.toml"
        path.write_text('kind = "loopback"\ndata_rate = 6e9\n', encoding="utf-8")
        with pytest.raises(ConfigInvalid) as excinfo:
            load_scenario(path)
        assert excinfo.value.field == "data_rate"

    @pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.toml")), ids=lambda p: p.stem)
    def test_bundled_scenarios_load(self, path):
        cfg = load_scenario(path)
        assert cfg.name == path.stem
