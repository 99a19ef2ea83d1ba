"""Tests for report emission and the summary re-render."""

import csv
import io
import math
import os

import pytest

from homoclinickit.config import RunConfig
from homoclinickit.engine import OK, Engine, PipelineReport, StageRecord
from homoclinickit.errors import IoError
from homoclinickit.reports import (
    INTERSECTIONS_FILE,
    CERTIFICATES_FILE,
    KAM_FILE,
    ORBIT_FILE,
    PERIODIC_FILE,
    SCATTERING_FILE,
    SUMMARY_FILE,
    emit_reports,
    fmt,
    render_summary,
    rerender_summary,
    trace_file_name,
)

from conftest import small_config


def read_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


class TestFormatting:
    """Number and file formatting."""

    def test_floats_round_trip(self):
        """Floats carry 17 significant digits."""
        assert fmt(0.1) == "0.10000000000000001"
        assert float(fmt(1.0 / 3.0)) == 1.0 / 3.0
        assert fmt(None) == "none"
        assert fmt(True) == "true"

    def test_trace_file_name(self):
        """Trace files are named after the action."""
        assert trace_file_name(1.0) == "traces_I1.csv"
        assert trace_file_name(0.25) == "traces_I0.25.csv"


class TestDemoReports:
    """Files of a full demo run."""

    @pytest.fixture(autouse=True)
    def _emit(self, demo_report, tmp_path):
        self.report = demo_report
        self.out = str(tmp_path / "out")
        self.written = emit_reports(demo_report, self.out)

    def test_file_set(self):
        """Every stage file is present, one trace file per curve."""
        names = set(os.listdir(self.out))
        assert {ORBIT_FILE, SCATTERING_FILE, KAM_FILE, PERIODIC_FILE, INTERSECTIONS_FILE, SUMMARY_FILE} <= names
        for curve, _, _ in self.report.traces:
            assert trace_file_name(curve.action) in names
        assert len(self.written) == len(names)

    def test_orbit_csv(self):
        """orbit.csv has a row per orbit index."""
        rows = read_csv(os.path.join(self.out, ORBIT_FILE))
        assert rows[0] == ["n", "x", "y", "u", "v"]
        assert len(rows) - 1 == 2 * self.report.orbit.n_max + 1
        assert rows[1][0] == str(-self.report.orbit.n_max)

    def test_scattering_txt(self):
        """scattering.txt holds A, its determinant residual and the roots."""
        text = open(os.path.join(self.out, SCATTERING_FILE), encoding="utf-8").read()
        assert "classification = generic\n" in text
        a_line = next(line for line in text.splitlines() if line.startswith("A = "))
        A = [float(v) for v in a_line[4:].split(", ")]
        assert A[0] == pytest.approx(1.5, abs=1e-10)
        assert A[3] == pytest.approx(1.0 / 1.5, abs=1e-10)
        roots = next(line for line in text.splitlines() if line.startswith("roots = "))
        assert len(roots[8:].split(", ")) == 4

    def test_kam_and_intersections(self):
        """One kam.csv row per action and count 4 on every intersections row."""
        kam = read_csv(os.path.join(self.out, KAM_FILE))
        assert kam[0] == ["I", "rotation_number", "verdict", "residual"]
        assert [float(r[0]) for r in kam[1:]] == [1.0, 2.0]
        inter = read_csv(os.path.join(self.out, INTERSECTIONS_FILE))
        assert inter[0][:3] == ["I", "count", "status"]
        assert inter[1:]
        assert all(r[1] == "4" and len(r) == 7 for r in inter[1:])

    def test_periodic_csv(self):
        """periodic.csv lists one row per periodic orbit found by the scan."""
        rows = read_csv(os.path.join(self.out, PERIODIC_FILE))
        assert rows[0] == ["p", "q", "classification", "trace", "residual", "u0", "v0"]
        assert len(rows) - 1 == len(self.report.periodic_orbits)
        summary = open(os.path.join(self.out, SUMMARY_FILE), encoding="utf-8").read()
        assert f"periodic: {len(self.report.periodic_orbits)} orbits" in summary

    def test_trace_rows(self):
        """Trace files list the stable then the unstable polygon."""
        curve, ws, wu = self.report.traces[0]
        rows = read_csv(os.path.join(self.out, trace_file_name(curve.action)))
        assert rows[0] == ["side", "theta", "u", "v"]
        assert len(rows) - 1 == ws.n + wu.n
        assert rows[1][0] == "stable" and rows[-1][0] == "unstable"

    def test_lf_only(self):
        """No carriage returns anywhere."""
        for path in self.written:
            with open(path, "rb") as fh:
                assert b"\r" not in fh.read()

    def test_summary_rerender(self):
        """The report verb rebuilds the same summary from the files."""
        path = os.path.join(self.out, SUMMARY_FILE)
        before = open(path, encoding="utf-8").read()
        assert rerender_summary(self.out) == path
        assert open(path, encoding="utf-8").read() == before
        assert "certificates:" in before
        assert f"exit_code = {self.report.exit_code()}" in before


class TestDeterminism:
    """Same configuration and seed give identical files."""

    def test_byte_identical(self, tmp_path):
        """Two runs through the center scan write the same bytes."""
        dirs = []
        for k in range(2):
            engine = Engine()
            report = engine.run_pipeline(small_config(), stop_after="kam_scan")
            engine.close()
            out = tmp_path / f"run{k}"
            emit_reports(report, str(out))
            dirs.append(out)
        names = sorted(os.listdir(dirs[0]))
        assert names == sorted(os.listdir(dirs[1]))
        for name in names:
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


class TestPartialReports:
    """Only completed stages write files."""

    def test_empty_kam_table(self, tmp_path):
        """An empty scan writes the header only."""
        report = PipelineReport(RunConfig(), stages={"kam_scan": StageRecord("kam_scan", OK)})
        emit_reports(report, str(tmp_path))
        assert (tmp_path / KAM_FILE).read_text(encoding="utf-8") == "I,rotation_number,verdict,residual\n"
        assert not (tmp_path / ORBIT_FILE).exists()
        assert "kam: 0 actions" in (tmp_path / SUMMARY_FILE).read_text(encoding="utf-8")

    def test_failed_run_keeps_earlier_outputs(self, tmp_path):
        """A halt at the fixed point still records the stages and the exit code."""
        report = Engine(discover=False).run_pipeline(small_config(alpha=2.0 * math.pi / 3.0))
        emit_reports(report, str(tmp_path))
        stages = read_csv(str(tmp_path / "stages.csv"))
        assert stages[1][:2] == ["build", "ok"]
        assert stages[2][:2] == ["fixed_point", "failed"]
        assert "StrongResonance" in stages[2][2]
        assert not (tmp_path / ORBIT_FILE).exists()
        summary = (tmp_path / SUMMARY_FILE).read_text(encoding="utf-8")
        assert "failed_stage = fixed_point" in summary
        assert "exit_code = 2" in summary

    def test_rerun_drops_stale_files(self, demo_report, tmp_path):
        """A failed run into a used directory does not inherit the earlier results."""
        emit_reports(demo_report, str(tmp_path))
        assert (tmp_path / INTERSECTIONS_FILE).exists()
        report = Engine(discover=False).run_pipeline(small_config(alpha=2.0 * math.pi / 3.0))
        emit_reports(report, str(tmp_path))
        names = set(os.listdir(tmp_path))
        for stale in (ORBIT_FILE, SCATTERING_FILE, KAM_FILE, PERIODIC_FILE, INTERSECTIONS_FILE,
                      CERTIFICATES_FILE):
            assert stale not in names
        assert not [n for n in names if n.startswith("traces_I")]
        summary = (tmp_path / SUMMARY_FILE).read_text(encoding="utf-8")
        assert "classification" not in summary
        assert "kam:" not in summary
        assert "intersections:" not in summary
        assert "failed_stage = fixed_point" in summary

    def test_unrelated_files_survive(self, tmp_path):
        """Only report files are removed."""
        (tmp_path / "notes.txt").write_text("keep", encoding="utf-8")
        emit_reports(PipelineReport(RunConfig()), str(tmp_path))
        assert (tmp_path / "notes.txt").read_text(encoding="utf-8") == "keep"


class TestErrors:
    """I/O failures."""

    def test_unwritable_outdir(self, tmp_path):
        """A file where the directory should be is an IoError."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        with pytest.raises(IoError):
            emit_reports(PipelineReport(RunConfig()), str(blocker))

    def test_summary_needs_run_record(self, tmp_path):
        """Re-rendering an empty directory fails."""
        with pytest.raises(IoError, match="run record"):
            render_summary(str(tmp_path))
