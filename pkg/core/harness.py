from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from core.analog_model import LevelConfig, Waveform, channel_transfer, inject_jitter, render_waveform
from core.errors import BenchError, ConfigInvalid, PipelineStageError
from core.eye_analysis import EyeMetrics, EyeRecord, analyze_eye, find_crossings, fold_eye
from core.pattern_gen import DATA_CHANNELS, HEADER_CHANNELS, BitPattern, fixed_pattern, vortex_packet_train
from core.sampler import Capture, CaptureComparison, compare_capture, strobe_sample
from core.scenario import ScenarioConfig
from core.serializer import (
    DEFAULT_RANGE_PS,
    DEFAULT_RESOLUTION_PS,
    EdgeProgram,
    demux_stage,
    mux_stage,
    place_edges,
    two_stage_demux,
    two_stage_mux,
)
from core.settings import load_settings

logger = logging.getLogger(__name__)

VERSION = "0.1.0"
REPORT_DECIMALS = 4
LOOPBACK_CHANNEL = "loopback"
HIGH_SPEED_CHANNELS = DATA_CHANNELS + ("clock",)
DLC_FAN_IN = 8
TESTBED_CHANNELS = HIGH_SPEED_CHANNELS + ("frame",) + HEADER_CHANNELS
# stream offsets for derive_seed inside one site
_APERTURE_STREAM = 1000


def derive_seed(seed: int, index: int) -> int:
    """Per-site / per-channel seed: first 32-bit word of numpy SeedSequence([seed, index])."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _round(value: float | None) -> float | None:
    if value is None:
        return None
    return round(float(value), REPORT_DECIMALS)


@contextmanager
def pipeline_stage(name: str) -> Iterator[None]:
    try:
        yield
    except PipelineStageError:
        raise
    except (BenchError, ValueError) as exc:
        logger.error("stage_failed stage=%s error=%s", name, exc)
        raise PipelineStageError(name, exc) from exc


@dataclass(slots=True)
class Verdict:
    name: str
    channel: str
    value: float
    limit: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "channel": self.channel,
            "value": _round(self.value),
            "limit": _round(self.limit),
            "passed": self.passed,
        }


@dataclass(slots=True)
class Provenance:
    seed: int
    site_index: int
    site_seed: int
    version: str = VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "site_index": self.site_index,
            "site_seed": self.site_seed,
            "version": self.version,
        }


@dataclass(slots=True, eq=False)
class RunArtifacts:
    """Intermediate data kept for exports; never part of the serialised report."""

    waveforms: dict[str, Waveform] = field(default_factory=dict)
    eyes: dict[str, EyeRecord] = field(default_factory=dict)
    lanes: dict[str, list[BitPattern]] = field(default_factory=dict)
    capture: Capture | None = None


@dataclass(slots=True, eq=False)
class RunReport:
    name: str
    kind: str
    scenario: dict[str, Any]
    metrics: dict[str, EyeMetrics]
    verdicts: list[Verdict]
    provenance: Provenance
    comparison: CaptureComparison | None = None
    artifacts: RunArtifacts | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict[str, Any]:
        comparison = None
        if self.comparison is not None:
            comparison = {
                "passed": self.comparison.passed,
                "error_count": self.comparison.error_count,
                "n_bits": self.comparison.n_bits,
                "first_error_positions": self.comparison.error_positions[:32],
            }
        return {
            "name": self.name,
            "kind": self.kind,
            "passed": self.passed,
            "scenario": self.scenario,
            "metrics": {
                channel: {
                    key: (_round(value) if isinstance(value, float) else value)
                    for key, value in m.to_dict().items()
                }
                for channel, m in self.metrics.items()
            },
            "comparison": comparison,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "provenance": self.provenance.to_dict(),
        }


@dataclass(slots=True, eq=False)
class SiteResult:
    index: int
    report: RunReport | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and self.report is not None and self.report.passed

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "passed": self.passed,
            "error": self.error,
            "report": self.report.to_dict() if self.report is not None else None,
        }


@dataclass(slots=True, eq=False)
class ParallelReport:
    name: str
    n_sites: int
    sites: list[SiteResult]

    @property
    def throughput_factor(self) -> float:
        # ideal scaling: every site tests one die per single-site test time
        return float(self.n_sites)

    @property
    def passed(self) -> bool:
        return all(site.passed for site in self.sites)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "kind": "parallel",
            "passed": self.passed,
            "n_sites": self.n_sites,
            "throughput_factor": self.throughput_factor,
            "failed_sites": [site.index for site in self.sites if not site.passed],
            "sites": [site.to_dict() for site in self.sites],
        }


def _eye_verdicts(cfg: ScenarioConfig, channel: str, m: EyeMetrics) -> list[Verdict]:
    limits = cfg.limits
    verdicts: list[Verdict] = []
    if limits.min_eye_opening_ui is not None:
        verdicts.append(
            Verdict(
                "min_eye_opening_ui",
                channel,
                m.eye_opening_ui,
                limits.min_eye_opening_ui,
                (not m.eye_closed) and round(m.eye_opening_ui, REPORT_DECIMALS) >= limits.min_eye_opening_ui,
            )
        )
    if limits.max_jitter_pp_ps is not None:
        verdicts.append(
            Verdict(
                "max_jitter_pp_ps",
                channel,
                m.jitter_pp,
                limits.max_jitter_pp_ps,
                round(m.jitter_pp, REPORT_DECIMALS) <= limits.max_jitter_pp_ps,
            )
        )
    if limits.min_eye_height_mv is not None:
        verdicts.append(
            Verdict(
                "min_eye_height_mv",
                channel,
                m.eye_height,
                limits.min_eye_height_mv,
                round(m.eye_height, REPORT_DECIMALS) >= limits.min_eye_height_mv,
            )
        )
    return verdicts


def _render_line(
    line: BitPattern,
    program: EdgeProgram,
    cfg: ScenarioConfig,
    levels: LevelConfig,
    jitter_seed: int,
) -> Waveform:
    with pipeline_stage("place_edges"):
        edges = place_edges(line, program)
    with pipeline_stage("inject_jitter"):
        jittered = inject_jitter(edges, cfg.jitter.config(jitter_seed))
    with pipeline_stage("render"):
        return render_waveform(jittered, levels, cfg.render_dt)


def _dlc_lanes(cfg: ScenarioConfig) -> dict[str, list[BitPattern]]:
    """FPGA lane outputs at data_rate / 8: eight lanes per high-speed line, in mux order."""
    lane_rate = cfg.data_rate / DLC_FAN_IN
    lane_bits = cfg.n_bits // DLC_FAN_IN
    n_data = len(DATA_CHANNELS)
    lanes: dict[str, list[BitPattern]] = {}
    if cfg.pattern.kind == "prbs":
        # one PRBS at four times the line rate; lane i + 4j feeds slot j of data line i
        source = cfg.pattern.generate(n_data * cfg.n_bits, cfg.data_rate * n_data)
        outputs = demux_stage(source, n_data * DLC_FAN_IN)
        for i, name in enumerate(DATA_CHANNELS):
            lanes[name] = [outputs[i + n_data * j] for j in range(DLC_FAN_IN)]
    else:
        if cfg.pattern.kind == "vortex":
            packets = cfg.n_bits // cfg.vortex.word_length
            words = cfg.vortex.data_words or []
            streams = [
                BitPattern(bits=np.tile(np.asarray(w, dtype=np.uint8), packets), bit_rate=cfg.data_rate)
                for w in words
            ]
        else:
            streams = [cfg.pattern.generate(cfg.n_bits, cfg.data_rate) for _ in DATA_CHANNELS]
        for name, stream in zip(DATA_CHANNELS, streams):
            lanes[name] = demux_stage(stream, DLC_FAN_IN)
    # even lanes held high, odd lanes low: the 8:1 output toggles every bit
    lanes["clock"] = [
        fixed_pattern("all-ones" if j % 2 == 0 else "all-zeros", lane_bits, lane_rate) for j in range(DLC_FAN_IN)
    ]
    return lanes


def run_testbed(cfg: ScenarioConfig, *, keep_artifacts: bool = False) -> RunReport:
    """Optical test-bed pipeline: Vortex packet lines -> 8:1 mux -> edges -> jitter -> render -> eye."""
    if cfg.kind != "testbed":
        raise ConfigInvalid("kind", f"run_testbed에는 testbed 시나리오가 필요합니다: {cfg.kind}")
    started = time.perf_counter()
    site_seed = derive_seed(cfg.seed, 0)

    with pipeline_stage("pattern"):
        lanes = _dlc_lanes(cfg)
    with pipeline_stage("mux"):
        serial = {name: mux_stage(lane_set) for name, lane_set in lanes.items()}
    with pipeline_stage("pattern"):
        train = vortex_packet_train(
            [serial[name] for name in DATA_CHANNELS],
            cfg.vortex.header_bits,
            cfg.data_rate,
            word_length=cfg.vortex.word_length,
            frame_rate_divisor=cfg.vortex.frame_rate_divisor,
        )
        program = cfg.edges.program()
        levels = cfg.levels.config()
    lines = {**train.channels, "clock": serial["clock"]}

    artifacts = RunArtifacts()
    if keep_artifacts:
        artifacts.lanes = lanes
    metrics: dict[str, EyeMetrics] = {}
    verdicts: list[Verdict] = []
    for index, name in enumerate(TESTBED_CHANNELS):
        line = lines[name]
        w = _render_line(line, program, cfg, levels, derive_seed(site_seed, index))
        with pipeline_stage("eye"):
            m = analyze_eye(w, line.period_ps)
        metrics[name] = m
        verdicts.extend(_eye_verdicts(cfg, name, m))
        if keep_artifacts:
            artifacts.waveforms[name] = w
            artifacts.eyes[name] = fold_eye(w, line.period_ps, m.threshold)

    report = RunReport(
        name=cfg.name,
        kind="testbed",
        scenario=cfg.echo(),
        metrics=metrics,
        verdicts=verdicts,
        provenance=Provenance(seed=cfg.seed, site_index=0, site_seed=site_seed),
        artifacts=artifacts if keep_artifacts else None,
    )
    logger.info(
        "run_testbed name=%s channels=%d passed=%s elapsed=%.2fs",
        cfg.name,
        len(metrics),
        report.passed,
        time.perf_counter() - started,
    )
    return report


def strobe_times(cfg: ScenarioConfig, program: EdgeProgram) -> np.ndarray:
    """Bit-centre strobes, shifted by the mean edge delay and the channel delay, snapped to the strobe grid."""
    period = cfg.bit_period_ps
    res = cfg.sampler.strobe_resolution
    centre = (
        np.arange(cfg.n_bits) * period
        + period / 2
        + (program.leading_delay + program.trailing_delay) / 2
        + cfg.channel.delay
        + cfg.sampler.strobe_offset
    )
    return np.rint(centre / res) * res


def _flip(pattern: BitPattern, positions: Sequence[int]) -> BitPattern:
    bits = pattern.bits.copy()
    for pos in sorted(set(positions)):
        bits[pos] ^= 1
    return BitPattern(bits=bits, bit_rate=pattern.bit_rate)


def _run_site(
    cfg: ScenarioConfig,
    site_index: int,
    expected_flips: Sequence[int],
    keep_artifacts: bool = False,
) -> RunReport:
    site_seed = derive_seed(cfg.seed, site_index)
    rate = cfg.data_rate

    with pipeline_stage("pattern"):
        source = cfg.pattern.generate(cfg.n_bits, rate)
        program = cfg.edges.program()
        levels = cfg.levels.config()
    with pipeline_stage("mux"):
        # sixteen DLC lanes -> 8:1 -> 2:1
        stream = two_stage_mux(two_stage_demux(source))
    w = _render_line(stream, program, cfg, levels, derive_seed(site_seed, 0))
    with pipeline_stage("channel"):
        w = channel_transfer(w, cfg.channel.model())
    with pipeline_stage("sample"):
        sampler = cfg.sampler.config(
            cfg.sampler.threshold if cfg.sampler.threshold is not None else levels.midpoint,
            derive_seed(site_seed, _APERTURE_STREAM),
        )
        capture = strobe_sample(w, strobe_times(cfg, program), sampler)
    with pipeline_stage("compare"):
        comparison = compare_capture(_flip(source, expected_flips), capture)
    with pipeline_stage("eye"):
        m = analyze_eye(w, stream.period_ps)

    verdicts = [
        Verdict(
            "max_bit_errors",
            LOOPBACK_CHANNEL,
            float(comparison.error_count),
            float(cfg.limits.max_bit_errors),
            comparison.error_count <= cfg.limits.max_bit_errors,
        )
    ]
    verdicts.extend(_eye_verdicts(cfg, LOOPBACK_CHANNEL, m))

    artifacts = None
    if keep_artifacts:
        artifacts = RunArtifacts(
            waveforms={LOOPBACK_CHANNEL: w},
            eyes={LOOPBACK_CHANNEL: fold_eye(w, stream.period_ps, m.threshold)},
            capture=capture,
        )
    logger.info(
        "site_done name=%s site=%d errors=%d opening_ui=%.4f",
        cfg.name,
        site_index,
        comparison.error_count,
        m.eye_opening_ui,
    )
    return RunReport(
        name=cfg.name,
        kind="loopback",
        scenario=cfg.echo(),
        metrics={LOOPBACK_CHANNEL: m},
        verdicts=verdicts,
        provenance=Provenance(seed=cfg.seed, site_index=site_index, site_seed=site_seed),
        comparison=comparison,
        artifacts=artifacts,
    )


def _site_flips(cfg: ScenarioConfig, index: int) -> list[int]:
    """Expected-pattern flips for a site: the shared loopback flips plus that site's own."""
    return list(cfg.loopback.expected_flips) + list(cfg.parallel.site_expected_flips.get(index, []))


def run_loopback(cfg: ScenarioConfig, *, keep_artifacts: bool = False) -> RunReport:
    """Wafer-probe loopback: two-stage mux -> edges -> jitter -> render -> channel -> strobe -> compare."""
    if cfg.kind != "loopback":
        raise ConfigInvalid("kind", f"run_loopback에는 loopback 시나리오가 필요합니다: {cfg.kind}")
    return _run_site(cfg, 0, _site_flips(cfg, 0), keep_artifacts)


def _resolve_workers(total: int) -> int:
    configured = load_settings().site_workers
    if configured:
        return configured
    return min(8, max(1, total))


def run_parallel(cfg: ScenarioConfig, n_sites: int | None = None) -> ParallelReport:
    """Run independent loopback sites; site k uses derive_seed(seed, k), site 0 equals run_loopback."""
    if cfg.kind != "loopback":
        raise ConfigInvalid("kind", f"run_parallel에는 loopback 시나리오가 필요합니다: {cfg.kind}")
    total = cfg.parallel.n_sites if n_sites is None else n_sites
    if total < 1:
        raise ConfigInvalid("parallel.n_sites", f"사이트 수는 1 이상이어야 합니다: {total}")

    def _site_worker(index: int) -> SiteResult:
        try:
            return SiteResult(index=index, report=_run_site(cfg, index, _site_flips(cfg, index)))
        except BenchError as exc:
            logger.warning("site_failed name=%s site=%d error=%s", cfg.name, index, exc)
            return SiteResult(index=index, error=str(exc))

    started = time.perf_counter()
    results: list[SiteResult] = []
    workers = min(_resolve_workers(total), total)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(_site_worker, index) for index in range(total)]
        for future in as_completed(futures):
            results.append(future.result())
    results.sort(key=lambda site: site.index)

    report = ParallelReport(name=cfg.name, n_sites=total, sites=results)
    logger.info(
        "run_parallel name=%s sites=%d workers=%d failed=%d elapsed=%.2fs",
        cfg.name,
        total,
        workers,
        sum(not site.passed for site in results),
        time.perf_counter() - started,
    )
    return report


def run_scenario(cfg: ScenarioConfig) -> RunReport | ParallelReport:
    if cfg.kind == "testbed":
        return run_testbed(cfg, keep_artifacts=True)
    if cfg.parallel.n_sites > 1:
        return run_parallel(cfg)
    return run_loopback(cfg, keep_artifacts=True)


@dataclass(slots=True)
class TimingSweepResult:
    n_placements: int
    seed: int
    max_quantization_error: float
    max_placement_error: float
    rms_placement_error: float
    quantization_limit: float = 5.0
    placement_limit: float = 25.0

    @property
    def passed(self) -> bool:
        return (
            self.max_quantization_error <= self.quantization_limit
            and self.max_placement_error <= self.placement_limit
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "timing_sweep",
            "passed": self.passed,
            "n_placements": self.n_placements,
            "seed": self.seed,
            "max_quantization_error_ps": _round(self.max_quantization_error),
            "max_placement_error_ps": _round(self.max_placement_error),
            "rms_placement_error_ps": _round(self.rms_placement_error),
            "quantization_limit_ps": self.quantization_limit,
            "placement_limit_ps": self.placement_limit,
            "version": VERSION,
        }


def run_timing_sweep(
    n_placements: int = 1000,
    seed: int = 0,
    *,
    levels: LevelConfig | None = None,
    resolution: float = DEFAULT_RESOLUTION_PS,
    range: float = DEFAULT_RANGE_PS,
    dt: float = 2.5,
) -> TimingSweepResult:
    """Place random requested leading/trailing delays and measure where the rendered edges cross.

    Each placement drives the pattern 0,1,0 with a bit period longer than the delay range, so the
    rising and falling edges can take any programmed delay without colliding.
    """
    if n_placements < 1:
        raise ConfigInvalid("placements", f"1 이상이어야 합니다: {n_placements}")
    levels = levels or LevelConfig()
    period = range + 2000.0
    pattern = BitPattern(bits=[0, 1, 0], bit_rate=1e12 / period)
    nominal = np.array([1.0, 2.0]) * pattern.period_ps
    rng = np.random.default_rng(seed)
    requests = rng.uniform(0.0, range, size=(n_placements, 2))

    quant_err = np.empty((n_placements, 2))
    place_err = np.empty((n_placements, 2))
    for i, (lead, trail) in enumerate(requests):
        with pipeline_stage("place_edges"):
            program = EdgeProgram.from_requested(lead, trail, resolution=resolution, range=range)
            edges = place_edges(pattern, program)
        with pipeline_stage("render"):
            w = render_waveform(edges, levels, dt)
        with pipeline_stage("eye"):
            times, _ = find_crossings(w, levels.midpoint)
        if times.size != 2:
            raise PipelineStageError("eye", BenchError(f"교차점 개수가 2가 아닙니다: {times.size}"))
        quant_err[i] = (program.leading_delay - lead, program.trailing_delay - trail)
        place_err[i] = times - (nominal + (lead, trail))

    result = TimingSweepResult(
        n_placements=n_placements,
        seed=seed,
        max_quantization_error=float(np.abs(quant_err).max()),
        max_placement_error=float(np.abs(place_err).max()),
        rms_placement_error=float(np.sqrt(np.mean(place_err**2))),
    )
    logger.info(
        "timing_sweep placements=%d max_quant=%.3f max_place=%.3f",
        n_placements,
        result.max_quantization_error,
        result.max_placement_error,
    )
    return result
