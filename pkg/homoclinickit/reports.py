"""Deterministic report files for a pipeline run.

Every float is written as ``%.17g`` and every line ends with LF, so two runs
with the same configuration and seed produce byte-identical directories.
Timings are left out for the same reason. Only stages that completed write
their files; ``summary.txt`` is rendered from the other files, which lets
the ``report`` verb rebuild it from a directory alone.
"""

from typing import Dict, Iterable, List, Optional, Sequence
import csv
import fnmatch
import io
import json
import logging
import os

from . import __version__
from .center_dynamics import kam_rows, periodic_rows
from .config import describe_config
from .errors import IoError
from .homoclinic import orbit_rows
from .plugin_api import serialize_certificate

logger = logging.getLogger("homoclinickit.reports")

CONFIG_FILE = "config.txt"
RUN_FILE = "run.txt"
STAGES_FILE = "stages.csv"
ORBIT_FILE = "orbit.csv"
SCATTERING_FILE = "scattering.txt"
KAM_FILE = "kam.csv"
PERIODIC_FILE = "periodic.csv"
INTERSECTIONS_FILE = "intersections.csv"
CERTIFICATES_FILE = "certificates.json"
SUMMARY_FILE = "summary.txt"


def fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    if hasattr(value, "item") and getattr(value, "ndim", 1) == 0:
        return fmt(value.item())
    return str(value)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _kv_text(items: Iterable) -> str:
    return "".join(f"{k} = {fmt(v) if not isinstance(v, str) else v}\n" for k, v in items)


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def trace_file_name(action: float) -> str:
    return f"traces_I{fmt(float(action))}.csv"


# -- per-stage renderers --------------------------------------------------

def _scattering_text(report) -> str:
    S = report.scattering
    A = S.chart_matrix
    items = [
        ("N", S.N),
        ("T", S.T),
        ("frame", S.frame),
        ("A", ", ".join(fmt(float(v)) for v in A.ravel())),
        ("det", float(S.det)),
        ("det_residual", float(S.det_residual)),
        ("d11", float(report.transversality.d11)),
        ("delta_residual", float(report.transversality.delta_residual)),
    ]
    g = report.genericity
    if g is not None and report.completed("genericity"):
        items += [
            ("classification", g.classification),
            ("roots", ", ".join(fmt(r) for r in g.roots) or "none"),
            ("min_angle", float(g.min_angle)),
        ]
    return _kv_text(items)


def _intersection_rows(report) -> List[list]:
    rows = []
    for (curve, _, _), rep in zip(report.traces, report.intersections):
        rows.append([float(curve.action), rep.count, rep.status, *(float(a) for a in rep.angles)])
    return rows


def _stage_rows(report) -> List[list]:
    return [[rec.name, rec.status, rec.error or ""] for rec in report.stages.values()]


def _run_text(report) -> str:
    err = report.error
    return _kv_text([
        ("version", __version__),
        ("seed", report.config.seed),
        ("failed_stage", report.failed_stage or "none"),
        ("error", str(err) if err is not None else "none"),
        ("exit_code", report.exit_code()),
    ])


def _certificates_text(report) -> str:
    out = []
    for cert in report.certificates:
        d = serialize_certificate(cert)
        d.pop("time_ms", None)
        out.append(d)
    return json.dumps(out, indent=2, sort_keys=False) + "\n"


# -- summary --------------------------------------------------------------

def _parse_kv(text: str) -> Dict[str, str]:
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v
    return out


def render_summary(outdir: str) -> str:
    """Summary text built from the report files in ``outdir``."""
    run_path = os.path.join(outdir, RUN_FILE)
    if not os.path.exists(run_path):
        raise IoError(f"{outdir} holds no run record ({RUN_FILE} missing)")
    run = _parse_kv(_read(run_path))
    lines = [f"homoclinickit {run.get('version', '?')} seed {run.get('seed', '?')}", ""]

    lines.append("stages:")
    for row in list(csv.reader(io.StringIO(_read(os.path.join(outdir, STAGES_FILE)))))[1:]:
        name, status, error = row
        lines.append(f"  {name:<14}{status}" + (f"  ({error})" if error else ""))

    scat_path = os.path.join(outdir, SCATTERING_FILE)
    if os.path.exists(scat_path):
        scat = _parse_kv(_read(scat_path))
        lines += ["", "scattering:"]
        for key in ("A", "det_residual", "classification", "roots"):
            if key in scat:
                lines.append(f"  {key} = {scat[key]}")

    kam_path = os.path.join(outdir, KAM_FILE)
    if os.path.exists(kam_path):
        rows = list(csv.reader(io.StringIO(_read(kam_path))))[1:]
        verdicts: Dict[str, int] = {}
        for row in rows:
            verdicts[row[2]] = verdicts.get(row[2], 0) + 1
        lines += ["", f"kam: {len(rows)} actions"]
        lines += [f"  {v} = {n}" for v, n in sorted(verdicts.items())]

    per_path = os.path.join(outdir, PERIODIC_FILE)
    if os.path.exists(per_path):
        rows = list(csv.reader(io.StringIO(_read(per_path))))[1:]
        lines.append(f"periodic: {len(rows)} orbits")
        lines += [f"  {row[0]}/{row[1]} {row[2]}" for row in rows]

    inter_path = os.path.join(outdir, INTERSECTIONS_FILE)
    if os.path.exists(inter_path):
        rows = list(csv.reader(io.StringIO(_read(inter_path))))[1:]
        lines += ["", "intersections:"]
        lines += [f"  I = {row[0]}: {row[1]} ({row[2]})" for row in rows]

    cert_path = os.path.join(outdir, CERTIFICATES_FILE)
    if os.path.exists(cert_path):
        try:
            certs = json.loads(_read(cert_path))
        except json.JSONDecodeError as e:
            raise IoError(f"corrupt {CERTIFICATES_FILE}: {e}") from e
        lines += ["", "certificates:"]
        for c in certs:
            flags = c.get("flags") or []
            verdict = "skipped" if "skipped" in flags else ("pass" if c["passed"] else "FAIL")
            detail = ""
            if c.get("value") is not None:
                detail = f"  value {fmt(c['value'])} threshold {fmt(c.get('threshold'))}"
            if flags and "skipped" not in flags:
                detail += f"  [{', '.join(flags)}]"
            lines.append(f"  {c['name']:<20}{verdict}{detail}")

    lines += ["", f"failed_stage = {run.get('failed_stage', 'none')}"]
    if run.get("error", "none") != "none":
        lines.append(f"error = {run['error']}")
    lines.append(f"exit_code = {run.get('exit_code', '?')}")
    return "\n".join(lines) + "\n"


def rerender_summary(outdir: str) -> str:
    """Rewrite ``summary.txt`` from the files of ``outdir``; returns its path."""
    path = os.path.join(outdir, SUMMARY_FILE)
    _write(path, render_summary(outdir))
    return path


# -- emission -------------------------------------------------------------

_OWNED = (ORBIT_FILE, SCATTERING_FILE, KAM_FILE, PERIODIC_FILE, INTERSECTIONS_FILE, CERTIFICATES_FILE)


def _remove_stale(outdir: str, files: Dict[str, str]) -> None:
    """Delete report files of stages this run did not complete."""
    for name in sorted(os.listdir(outdir)):
        owned = name in _OWNED or fnmatch.fnmatch(name, "traces_I*.csv")
        if owned and name not in files:
            try:
                os.remove(os.path.join(outdir, name))
            except OSError as e:
                raise IoError(f"cannot remove stale {name}: {e}") from e
            logger.debug("stale_report_removed", extra={"file": name})


def emit_reports(report, outdir: Optional[str] = None) -> List[str]:
    """Write the report files of the completed stages; returns the paths written."""
    outdir = outdir or report.config.out_dir
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {outdir}: {e}") from e

    files: Dict[str, str] = {
        CONFIG_FILE: describe_config(report.config),
        RUN_FILE: _run_text(report),
        STAGES_FILE: _csv_text(("stage", "status", "error"), _stage_rows(report)),
    }
    if report.completed("homoclinic"):
        files[ORBIT_FILE] = _csv_text(("n", "x", "y", "u", "v"), orbit_rows(report.orbit))
    if report.completed("scattering"):
        files[SCATTERING_FILE] = _scattering_text(report)
    if report.completed("kam_scan"):
        files[KAM_FILE] = _csv_text(("I", "rotation_number", "verdict", "residual"),
                                    kam_rows(report.kam_curves))
        files[PERIODIC_FILE] = _csv_text(("p", "q", "classification", "trace", "residual", "u0", "v0"),
                                         periodic_rows(report.periodic_orbits))
    if report.completed("traces"):
        for curve, ws, wu in report.traces:
            files[trace_file_name(curve.action)] = _csv_text(("side", "theta", "u", "v"),
                                                             ws.rows() + wu.rows())
    if report.completed("intersections"):
        files[INTERSECTIONS_FILE] = _csv_text(("I", "count", "status", "angles"),
                                              _intersection_rows(report))
    if report.certificates:
        files[CERTIFICATES_FILE] = _certificates_text(report)

    _remove_stale(outdir, files)
    written = []
    for name, text in files.items():
        path = os.path.join(outdir, name)
        _write(path, text)
        written.append(path)
    written.append(rerender_summary(outdir))
    logger.info("reports_written", extra={"outdir": outdir, "files": len(written)})
    return written
