#!/usr/bin/env python3
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from core.db import db_session, init_db
from core.errors import BenchError, ConfigInvalid, ConfigSyntaxError, UnsupportedFormat
from core.exporters import FORMATS, REPORT_FORMATS, export, export_report
from core.harness import ParallelReport, RunReport, run_scenario, run_timing_sweep
from core.logging_setup import configure_logging
from core.run_store import list_runs, load_report, save_report
from core.scenario import ScenarioConfig, load_scenario
from core.settings import load_settings

logger = logging.getLogger("bench")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Simulate the PECL/FPGA multi-GHz test bench: run scenarios, validate configs, export results."
    )
    parser.add_argument("--log-level", default=None, help="Override BENCH_LOG_LEVEL (DEBUG, INFO, ...).")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario and write its report.")
    run.add_argument("scenario", type=Path)
    run.add_argument("--seed", type=int, default=None, help="Override the scenario seed.")
    run.add_argument("--out-dir", type=Path, default=None, help="Output directory (default: scenario output.out_dir).")
    run.add_argument("--no-history", action="store_true", help="Do not record the run in the history DB.")

    validate = sub.add_parser("validate", help="Validate a scenario file without running it.")
    validate.add_argument("scenario", type=Path)

    exp = sub.add_parser("export", help="Export a scenario run or a stored report.")
    source = exp.add_mutually_exclusive_group(required=True)
    source.add_argument("scenario", type=Path, nargs="?")
    source.add_argument("--run-id", type=int, default=None, help="Re-export a report from the run history.")
    exp.add_argument("--format", default="json", help=f"One of {', '.join(FORMATS)}.")
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--out-dir", type=Path, default=Path("out"))

    sweep = sub.add_parser("sweep", help="Random edge-placement timing accuracy sweep.")
    sweep.add_argument("--placements", type=int, default=1000)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--out-dir", type=Path, default=None)

    history = sub.add_parser("history", help="List recorded runs.")
    history.add_argument("--limit", type=int, default=20)
    return parser.parse_args(argv)


def _load(path: Path, seed: int | None) -> ScenarioConfig:
    cfg = load_scenario(path)
    return cfg.with_seed(seed) if seed is not None else cfg


def _write_artifacts(report: RunReport, cfg: ScenarioConfig, out_dir: Path, fmt_all: bool = False) -> list[Path]:
    written: list[Path] = []
    artifacts = report.artifacts
    if artifacts is None:
        return written
    if fmt_all or cfg.output.waveforms:
        for channel, w in artifacts.waveforms.items():
            written.append(export(w, out_dir / f"{cfg.name}.{channel}.waveform.csv", "csv"))
    if (fmt_all or cfg.output.captures) and artifacts.capture is not None:
        written.append(export(artifacts.capture, out_dir / f"{cfg.name}.capture.csv", "csv"))
    if fmt_all or cfg.output.eye_histogram:
        for channel, eye in artifacts.eyes.items():
            written.append(export(eye, out_dir / f"{cfg.name}.{channel}.eye.csv", "csv"))
    return written


def _print_summary(report: RunReport | ParallelReport) -> None:
    if isinstance(report, ParallelReport):
        print(f"{report.name}: sites={report.n_sites} throughput_x={report.throughput_factor:g} passed={report.passed}")
        for site in report.sites:
            status = "PASS" if site.passed else "FAIL"
            detail = site.error or f"errors={site.report.comparison.error_count if site.report and site.report.comparison else 0}"
            print(f"  site {site.index:>3}: {status} {detail}")
        return
    print(f"{report.name} [{report.kind}] passed={report.passed}")
    for channel, m in report.metrics.items():
        print(
            f"  {channel:<9} opening={m.eye_opening_ui:.4f} UI  jitter_pp={m.jitter_pp:.2f} ps"
            f"  rms={m.jitter_rms:.2f} ps  height={m.eye_height:.1f} mV"
        )
    if report.comparison is not None:
        print(f"  bit errors: {report.comparison.error_count}/{report.comparison.n_bits}")
    for verdict in report.verdicts:
        if not verdict.passed:
            print(f"  FAIL {verdict.name} [{verdict.channel}] value={verdict.value:g} limit={verdict.limit:g}")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args.scenario, args.seed)
    report = run_scenario(cfg)
    out_dir = args.out_dir or Path(cfg.output.out_dir)
    payload = report.to_dict()
    path = export_report(payload, out_dir / f"{cfg.name}.report.{cfg.output.report_format}", cfg.output.report_format)
    if isinstance(report, RunReport):
        _write_artifacts(report, cfg, out_dir)
    _print_summary(report)
    print(f"report: {path}")

    if load_settings().run_history and not args.no_history:
        init_db()
        with db_session() as session:
            record = save_report(session, report=payload, scenario=cfg.echo())
            print(f"run id: {record.id}")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.scenario)
    print(f"{args.scenario}: valid ({cfg.kind}, {cfg.data_rate:g} bps, seed {cfg.seed})")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    if args.format not in FORMATS:
        raise UnsupportedFormat(f"지원하지 않는 형식입니다: {args.format} (지원: {FORMATS})")
    if args.run_id is not None:
        if args.format not in REPORT_FORMATS:
            raise UnsupportedFormat("저장된 실행은 json/kv 보고서로만 내보낼 수 있습니다.")
        init_db()
        with db_session() as session:
            payload = load_report(session, args.run_id)
        if payload is None:
            print(f"run id {args.run_id} not found", file=sys.stderr)
            return EXIT_FAILED
        path = export_report(payload, args.out_dir / f"run-{args.run_id}.report.{args.format}", args.format)
        print(f"report: {path}")
        return EXIT_OK

    cfg = _load(args.scenario, args.seed)
    report = run_scenario(cfg)
    if args.format in REPORT_FORMATS:
        paths = [export(report, args.out_dir / f"{cfg.name}.report.{args.format}", args.format)]
    elif isinstance(report, RunReport):
        paths = _write_artifacts(report, cfg, args.out_dir, fmt_all=True)
    else:
        raise UnsupportedFormat("병렬 실행 결과는 csv로 내보낼 수 없습니다.")
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    result = run_timing_sweep(args.placements, args.seed)
    print(
        f"placements={result.n_placements} max_quantization={result.max_quantization_error:.3f} ps"
        f" max_placement={result.max_placement_error:.3f} ps rms={result.rms_placement_error:.3f} ps"
        f" passed={result.passed}"
    )
    if args.out_dir is not None:
        print(f"report: {export(result, args.out_dir / 'timing_sweep.report.json', 'json')}")
    return EXIT_OK if result.passed else EXIT_FAILED


def cmd_history(args: argparse.Namespace) -> int:
    init_db()
    with db_session() as session:
        runs = list_runs(session, limit=args.limit)
    if not runs:
        print("No runs recorded.")
        return EXIT_OK
    for run in runs:
        status = "PASS" if run.passed else "FAIL"
        print(f"{run.id:>5}  {run.created_at}  {run.kind.value:<8} {run.name:<24} seed={run.seed:<6} sites={run.n_sites:<3} {status}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "validate": cmd_validate,
    "export": cmd_export,
    "sweep": cmd_sweep,
    "history": cmd_history,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    configure_logging(args.log_level or load_settings().log_level)
    try:
        return COMMANDS[args.command](args)
    except (ConfigSyntaxError, ConfigInvalid, UnsupportedFormat) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BenchError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(1)
