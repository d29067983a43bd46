from __future__ import annotations

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.analog_model import ChannelModel, JitterConfig, LevelConfig, adjust_levels
from core.errors import BenchError, ConfigInvalid, ConfigSyntaxError, InvalidPolynomial, InvalidSeed
from core.pattern_gen import (
    DEFAULT_PRBS_ORDER,
    BitPattern,
    LfsrSpec,
    fixed_pattern,
    prbs_generate,
    prbs_spec,
)
from core.sampler import SamplerConfig
from core.serializer import DEFAULT_RANGE_PS, DEFAULT_RESOLUTION_PS, EdgeProgram

logger = logging.getLogger(__name__)

MAX_DATA_RATE = 5.5e9
LOOPBACK_LANES = 16
MIN_TESTBED_PACKETS = 4


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PatternSettings(_Section):
    kind: Literal["prbs", "fixed", "vortex"] = "prbs"
    order: int = DEFAULT_PRBS_ORDER
    taps: list[int] | None = None
    seed: int | None = None
    fixed_kind: Literal["alternating", "all-ones", "all-zeros", "custom"] = "alternating"
    bits: list[Literal[0, 1]] | None = None

    def lfsr(self) -> LfsrSpec:
        if self.taps:
            seed = self.seed if self.seed is not None else (1 << max(self.taps)) - 1
            return LfsrSpec(taps=tuple(self.taps), seed=seed)
        return prbs_spec(self.order, self.seed)

    def generate(self, n_bits: int, rate: float) -> BitPattern:
        if self.kind == "fixed":
            return fixed_pattern(self.fixed_kind, n_bits, rate, self.bits)
        return prbs_generate(self.lfsr(), n_bits, rate)


class VortexSettings(_Section):
    word_length: int = Field(default=32, ge=1)
    frame_rate_divisor: int = Field(default=8, ge=1)
    header_bits: list[Literal[0, 1]] = Field(default_factory=lambda: [1, 0, 1, 1], min_length=4, max_length=4)
    data_words: list[list[Literal[0, 1]]] | None = None


class EdgeSettings(_Section):
    # requested delays; quantised onto the resolution grid when the program is built
    leading_delay: float = 0.0
    trailing_delay: float = 0.0
    resolution: float = Field(default=DEFAULT_RESOLUTION_PS, gt=0)
    range: float = Field(default=DEFAULT_RANGE_PS, gt=0)

    def program(self) -> EdgeProgram:
        return EdgeProgram.from_requested(
            self.leading_delay, self.trailing_delay, resolution=self.resolution, range=self.range
        )


class JitterSettings(_Section):
    rj_rms: float = Field(default=0.0, ge=0)
    dj_pp: float = Field(default=0.0, ge=0)

    def config(self, seed: int) -> JitterConfig:
        return JitterConfig(rj_rms=self.rj_rms, dj_pp=self.dj_pp, seed=seed)


class LevelSettings(_Section):
    v_high: float = 2400.0
    v_low: float = 1600.0
    high_step: float = 100.0
    swing_step: float = 200.0
    low_step: float = 100.0
    bias_step: float = 100.0
    t_rise_2080: float = Field(default=75.0, gt=0)
    t_fall_2080: float = Field(default=75.0, gt=0)
    high_steps: int = 0
    swing_steps: int = 0
    low_steps: int = 0
    bias_steps: int = 0

    def config(self) -> LevelConfig:
        base = LevelConfig(
            v_high=self.v_high,
            v_low=self.v_low,
            high_step=self.high_step,
            swing_step=self.swing_step,
            t_rise_2080=self.t_rise_2080,
            t_fall_2080=self.t_fall_2080,
            low_step=self.low_step,
            bias_step=self.bias_step,
        )
        return adjust_levels(
            base,
            self.high_steps,
            self.swing_steps,
            low_steps=self.low_steps,
            bias_steps=self.bias_steps,
        )


class ChannelSettings(_Section):
    delay: float = Field(default=0.0, ge=0)
    attenuation: float = Field(default=0.0, ge=0)
    bandwidth: float | None = Field(default=None, gt=0)

    def model(self) -> ChannelModel:
        return ChannelModel(delay=self.delay, attenuation=self.attenuation, bandwidth=self.bandwidth)


class SamplerSettings(_Section):
    threshold: float | None = None
    strobe_resolution: float = Field(default=DEFAULT_RESOLUTION_PS, gt=0)
    strobe_range: float = Field(default=DEFAULT_RANGE_PS, gt=0)
    strobe_offset: float = 0.0
    voltage_step: float = Field(default=5.0, gt=0)
    sweep_low: float = 1000.0
    sweep_high: float = 3000.0
    aperture_rj_rms: float = Field(default=0.0, ge=0)
    aperture_dj_pp: float = Field(default=0.0, ge=0)

    def config(self, threshold: float, seed: int) -> SamplerConfig:
        aperture = None
        if self.aperture_rj_rms > 0 or self.aperture_dj_pp > 0:
            aperture = JitterConfig(rj_rms=self.aperture_rj_rms, dj_pp=self.aperture_dj_pp, seed=seed)
        return SamplerConfig(
            threshold=threshold,
            strobe_resolution=self.strobe_resolution,
            strobe_range=self.strobe_range,
            voltage_step=self.voltage_step,
            sweep_low=self.sweep_low,
            sweep_high=self.sweep_high,
            aperture_jitter=aperture,
        )


class LoopbackSettings(_Section):
    expected_flips: list[int] = Field(default_factory=list)


class ParallelSettings(_Section):
    n_sites: int = Field(default=1, ge=1)
    site_expected_flips: dict[int, list[int]] = Field(default_factory=dict)


class LimitSettings(_Section):
    min_eye_opening_ui: float | None = Field(default=None, ge=0, le=1)
    max_jitter_pp_ps: float | None = Field(default=None, ge=0)
    min_eye_height_mv: float | None = Field(default=None, ge=0)
    max_bit_errors: int = Field(default=0, ge=0)


class OutputSettings(_Section):
    out_dir: str = "out"
    report_format: Literal["json", "kv"] = "json"
    waveforms: bool = False
    captures: bool = False
    eye_histogram: bool = False


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    kind: Literal["testbed", "loopback"]
    data_rate: float = Field(gt=0, le=MAX_DATA_RATE)
    seed: int = Field(default=0, ge=0)
    n_bits: int = Field(default=4096, ge=1)
    render_dt: float = Field(default=2.0, gt=0)

    pattern: PatternSettings = Field(default_factory=PatternSettings)
    vortex: VortexSettings = Field(default_factory=VortexSettings)
    edges: EdgeSettings = Field(default_factory=EdgeSettings)
    jitter: JitterSettings = Field(default_factory=JitterSettings)
    levels: LevelSettings = Field(default_factory=LevelSettings)
    channel: ChannelSettings = Field(default_factory=ChannelSettings)
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)
    loopback: LoopbackSettings = Field(default_factory=LoopbackSettings)
    parallel: ParallelSettings = Field(default_factory=ParallelSettings)
    limits: LimitSettings = Field(default_factory=LimitSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @model_validator(mode="after")
    def _resolve_threshold(self) -> "ScenarioConfig":
        if self.sampler.threshold is None:
            try:
                midpoint = self.levels.config().midpoint
            except BenchError:
                # reported with its field name by the domain checks
                return self
            self.sampler = self.sampler.model_copy(update={"threshold": midpoint})
        return self

    @property
    def bit_period_ps(self) -> float:
        return 1e12 / self.data_rate

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return self.model_copy(update={"seed": seed})


def _field_path(loc: tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def _check_domain(cfg: ScenarioConfig) -> None:
    """Build every domain object once so invariant violations surface as ConfigInvalid."""
    if cfg.pattern.kind == "prbs":
        try:
            cfg.pattern.lfsr()
        except InvalidSeed as exc:
            raise ConfigInvalid("pattern.seed", str(exc)) from exc
        except InvalidPolynomial as exc:
            raise ConfigInvalid("pattern.taps" if cfg.pattern.taps else "pattern.order", str(exc)) from exc

    if cfg.sampler.sweep_high <= cfg.sampler.sweep_low:
        raise ConfigInvalid(
            "sampler.sweep_high",
            f"sweep_low({cfg.sampler.sweep_low})보다 커야 합니다: {cfg.sampler.sweep_high}",
        )

    checks = (
        ("edges", cfg.edges.program),
        ("levels", cfg.levels.config),
        ("channel", cfg.channel.model),
        ("sampler", lambda: cfg.sampler.config(cfg.sampler.threshold or 0.0, 0)),
    )
    for field, build in checks:
        try:
            build()
        except (BenchError, ValueError) as exc:
            raise ConfigInvalid(field, str(exc)) from exc

    if cfg.pattern.kind == "fixed" and cfg.pattern.fixed_kind == "custom" and not cfg.pattern.bits:
        raise ConfigInvalid("pattern.bits", "custom 패턴에는 비트가 하나 이상 필요합니다.")
    # a line without transitions has no crossings to fold into an eye
    if cfg.pattern.kind == "fixed":
        if cfg.pattern.fixed_kind in ("all-ones", "all-zeros"):
            raise ConfigInvalid(
                "pattern.fixed_kind", f"{cfg.pattern.fixed_kind} 패턴에는 전이가 없어 아이를 측정할 수 없습니다."
            )
        if cfg.pattern.fixed_kind == "custom" and len(set(cfg.pattern.bits)) < 2:
            raise ConfigInvalid("pattern.bits", "custom 패턴에는 0과 1이 모두 있어야 합니다.")

    if cfg.kind == "loopback":
        if cfg.pattern.kind == "vortex":
            raise ConfigInvalid("pattern.kind", "vortex 패턴은 testbed 시나리오에서만 사용할 수 있습니다.")
        if cfg.n_bits % LOOPBACK_LANES != 0:
            raise ConfigInvalid("n_bits", f"loopback n_bits는 {LOOPBACK_LANES}의 배수여야 합니다: {cfg.n_bits}")
        for pos in cfg.loopback.expected_flips:
            if not 0 <= pos < cfg.n_bits:
                raise ConfigInvalid("loopback.expected_flips", f"비트 위치 {pos}가 범위를 벗어났습니다.")
        for site, flips in cfg.parallel.site_expected_flips.items():
            if not 0 <= site < cfg.parallel.n_sites:
                raise ConfigInvalid("parallel.site_expected_flips", f"사이트 번호 {site}가 범위를 벗어났습니다.")
            if any(not 0 <= pos < cfg.n_bits for pos in flips):
                raise ConfigInvalid("parallel.site_expected_flips", f"사이트 {site}의 비트 위치가 범위를 벗어났습니다.")
    else:
        packet_bits = 2 * cfg.vortex.word_length
        if packet_bits % cfg.vortex.frame_rate_divisor != 0:
            raise ConfigInvalid(
                "vortex.frame_rate_divisor",
                f"패킷 길이({packet_bits})가 frame_rate_divisor로 나누어지지 않습니다.",
            )
        if packet_bits % 8 != 0:
            raise ConfigInvalid("vortex.word_length", "2 × word_length는 8의 배수여야 합니다 (8:1 다중화).")
        if cfg.n_bits % packet_bits != 0:
            raise ConfigInvalid("n_bits", f"testbed n_bits는 패킷 길이({packet_bits})의 배수여야 합니다.")
        # frame and header eyes need at least three transitions
        if cfg.n_bits < MIN_TESTBED_PACKETS * packet_bits:
            raise ConfigInvalid(
                "n_bits", f"testbed n_bits는 패킷 {MIN_TESTBED_PACKETS}개({MIN_TESTBED_PACKETS * packet_bits}비트) 이상이어야 합니다."
            )
        if cfg.pattern.kind == "vortex":
            words = cfg.vortex.data_words
            if not words or len(words) != 4 or any(len(w) != cfg.vortex.word_length for w in words):
                raise ConfigInvalid(
                    "vortex.data_words", f"word_length({cfg.vortex.word_length}) 비트짜리 워드 4개가 필요합니다."
                )

    finest = min(cfg.levels.t_rise_2080, cfg.levels.t_fall_2080)
    if cfg.render_dt > finest / 10:
        raise ConfigInvalid("render_dt", f"render_dt는 전이 시간 {finest} ps 의 1/10 이하여야 합니다.")


def parse_scenario(data: dict[str, Any]) -> ScenarioConfig:
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigInvalid(_field_path(tuple(first["loc"])), first["msg"]) from exc
    _check_domain(cfg)
    return cfg


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigSyntaxError(f"시나리오 파일이 없습니다: {path}") from exc
    except OSError as exc:
        raise ConfigSyntaxError(f"시나리오 파일을 읽을 수 없습니다: {path} ({exc})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigSyntaxError(f"시나리오 파일 구문 오류: {path} ({exc})") from exc
    if "name" not in data:
        data["name"] = path.stem
    cfg = parse_scenario(data)
    logger.info("scenario_loaded name=%s kind=%s rate=%.4g seed=%d", cfg.name, cfg.kind, cfg.data_rate, cfg.seed)
    return cfg
