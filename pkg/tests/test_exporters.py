from __future__ import annotations

import json

import numpy as np
import pytest

from core.errors import InvalidWaveform, IoError, UnsupportedFormat
from core.exporters import export, export_report, export_waveform, read_waveform, render_report
from core.eye_analysis import fold_eye
from core.harness import run_loopback
from core.sampler import Capture

REPORT = {
    "name": "wafer",
    "passed": True,
    "metrics": {"loopback": {"eye_opening_ui": 0.75, "crossings": 512}},
    "verdicts": [{"name": "max_bit_errors", "passed": True}],
}


class TestWaveformFiles:
    def test_round_trip_is_exact(self, tmp_path, render_bits, prbs7):
        w = render_bits(prbs7(64, 5e9).bits, 5e9, dt=0.5)
        path = export_waveform(w, tmp_path / "wave.csv")
        back = read_waveform(path)
        assert np.array_equal(back.samples, w.samples)
        assert (back.dt, back.t0) == (w.dt, w.t0)

    def test_header_and_columns(self, tmp_path, render_bits):
        path = export(render_bits([1, 0], 1e9), tmp_path / "wave.csv", "csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# dt_ps=1.0 t0_ps=0.0"
        assert lines[1] == "time_ps,voltage_mv"

    def test_bad_file(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("hello\n1,2\n", encoding="utf-8")
        with pytest.raises(InvalidWaveform):
            read_waveform(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_waveform(tmp_path / "absent.csv")


class TestReports:
    def test_json_is_byte_identical(self, tmp_path):
        first = export_report(REPORT, tmp_path / "a.json")
        second = export_report(dict(reversed(list(REPORT.items()))), tmp_path / "b.json")
        assert first.read_bytes() == second.read_bytes()
        assert json.loads(first.read_text(encoding="utf-8")) == REPORT
        assert first.read_text(encoding="utf-8").endswith("}\n")

    def test_kv_lines(self):
        text = render_report({"a": {"b": 1.5, "c": [1, 2]}, "name": "x"}, "kv")
        assert text == 'a.b=1.5\na.c.0=1\na.c.1=2\nname="x"\n'

    def test_run_report_export_repeatable(self, tmp_path, make_cfg):
        cfg = make_cfg(jitter={"dj_pp": 20.0})
        a = export(run_loopback(cfg), tmp_path / "a.json", "json")
        b = export(run_loopback(cfg), tmp_path / "b.json", "json")
        assert a.read_bytes() == b.read_bytes()


class TestTables:
    def test_capture_columns(self, tmp_path):
        capture = Capture(strobe_times=[100.0, 300.0, 500.0], decisions=[1, 0, 1])
        path = export(capture, tmp_path / "capture.csv", "csv")
        assert path.read_text(encoding="utf-8").splitlines() == [
            "strobe_time_ps,decision",
            "100,1",
            "300,0",
            "500,1",
        ]

    def test_eye_histogram_columns(self, tmp_path, render_bits):
        w = render_bits([1, 0] * 10, 2.5e9, dt=2.0)
        path = export(fold_eye(w, 400.0, 2000.0), tmp_path / "eye.csv", "csv")
        assert path.read_text(encoding="utf-8").splitlines()[0] == "phase_ps,voltage_mv,count"


class TestFailures:
    def test_unknown_format(self, tmp_path):
        with pytest.raises(UnsupportedFormat):
            export(REPORT, tmp_path / "r.xml", "xml")

    def test_unknown_report_format(self):
        with pytest.raises(UnsupportedFormat):
            render_report(REPORT, "yaml")

    def test_object_without_table_form(self, tmp_path):
        with pytest.raises(UnsupportedFormat):
            export(object(), tmp_path / "x.csv", "csv")

    def test_unwritable_destination(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("", encoding="utf-8")
        with pytest.raises(IoError):
            export(REPORT, blocker / "report.json", "json")
