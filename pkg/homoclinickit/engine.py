"""Pipeline engine: ordered analysis stages, certificate plugins and run logging."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import datetime
import importlib.metadata
import json
import logging
import time
import traceback

import numpy as np

from .center_dynamics import (
    QUASIPERIODIC,
    STABLE,
    UNSTABLE,
    CenterMap,
    KamCriteria,
    KamCurve,
    PeriodicOrbitRecord,
    detect_kam_curves,
    find_periodic_orbits,
    restrict_to_center,
)
from .config import RunConfig, default_config
from .errors import CertificateFailure, StageError, ValidationError
from .fixed_point_analysis import (
    NormalFormCoeffs,
    ResonanceReport,
    Spectrum1Elliptic,
    classify_spectrum,
    enumerate_resonances,
    extract_normal_form,
    find_fixed_point,
)
from .homoclinic import (
    HomoclinicOrbit,
    HomoclinicScan,
    assemble_homoclinic_orbit,
    continue_manifold_curve,
    homoclinic_distance,
)
from .model_zoo import GlobalMapSpec, LocalModelParams, MapModel, build_model
from .plugin_api import CertificatePlugin, CertificateResult
from .scattering import (
    GenericityReport,
    LinearizationSequence,
    ScatteringMap,
    TransversalityReport,
    build_scattering_map,
    check_genericity,
    check_transversality,
    linearize_along_orbit,
)
from .sigma_analysis import (
    IntersectionReport,
    SigmaDisk,
    TraceCurve,
    build_sigma_disk,
    count_transverse_intersections,
    trace_manifold_on_sigma,
)

logger = logging.getLogger("homoclinickit.engine")

STAGES = ("build", "fixed_point", "homoclinic", "scattering", "genericity", "kam_scan", "traces",
          "intersections")
DEPENDS = {
    "build": (),
    "fixed_point": ("build",),
    "homoclinic": ("fixed_point",),
    "scattering": ("homoclinic",),
    "genericity": ("scattering",),
    "kam_scan": ("fixed_point",),
    "traces": ("kam_scan",),
    "intersections": ("traces", "genericity"),
}

OK = "ok"
FAILED = "failed"
SKIPPED = "skipped"


@dataclass
class StageRecord:
    name: str
    status: str
    time_ms: float = 0.0
    error: Optional[str] = None


@dataclass(eq=False)
class PipelineReport:
    """Results of the completed stages and of the certificates."""
    config: RunConfig
    stages: Dict[str, StageRecord] = field(default_factory=dict)
    model: Optional[MapModel] = None
    fixed_point: Optional[np.ndarray] = None
    spectrum: Optional[Spectrum1Elliptic] = None
    resonances: Optional[ResonanceReport] = None
    normal_form: Optional[NormalFormCoeffs] = None
    orbit: Optional[HomoclinicOrbit] = None
    manifold_scan: Optional[HomoclinicScan] = None
    sequence: Optional[LinearizationSequence] = None
    transversality: Optional[TransversalityReport] = None
    scattering: Optional[ScatteringMap] = None
    genericity: Optional[GenericityReport] = None
    center_map: Optional[CenterMap] = None
    kam_curves: List[KamCurve] = field(default_factory=list)
    periodic_orbits: List[PeriodicOrbitRecord] = field(default_factory=list)
    sigma: Optional[SigmaDisk] = None
    traces: List[Tuple[KamCurve, TraceCurve, TraceCurve]] = field(default_factory=list)
    intersections: List[IntersectionReport] = field(default_factory=list)
    certificates: List[CertificateResult] = field(default_factory=list)
    error: Optional[StageError] = None

    def completed(self, stage: str) -> bool:
        rec = self.stages.get(stage)
        return rec is not None and rec.status == OK

    @property
    def failed_stage(self) -> Optional[str]:
        return self.error.stage if self.error is not None else None

    @property
    def failed_certificates(self) -> List[CertificateResult]:
        return [c for c in self.certificates if not c.passed and not c.skipped]

    @property
    def passed(self) -> bool:
        return self.error is None and not self.failed_certificates

    def exit_code(self) -> int:
        """0 when everything passed, 2 for a certificate failure, 1 for any other error."""
        if self.error is not None:
            return 2 if self.error.is_certificate_failure else 1
        failed = self.failed_certificates
        if any("error" in c.flags for c in failed):
            return 1
        return 2 if failed else 0

    def raise_for_status(self) -> None:
        if self.error is not None:
            raise self.error


class _JSONFormatter(logging.Formatter):
    _STANDARD = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}

    def format(self, record):
        try:
            rec = {
                "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                "level": record.levelname,
                "logger": record.name,
                "message": record.getMessage(),
            }
            for key, value in vars(record).items():
                if key not in self._STANDARD:
                    rec[key] = value
            if record.exc_info:
                rec["exc"] = "".join(traceback.format_exception(*record.exc_info))
            return json.dumps(rec, ensure_ascii=False, default=str)
        except Exception:
            return super().format(record)


class Engine:
    """Runs the analysis stages in order and then the registered certificates."""

    def __init__(self, discover: bool = True):
        self._certificates: Dict[str, CertificatePlugin] = {}
        # Map of configured log_path -> handler to avoid duplicate handlers across runs
        self._log_handlers: Dict[str, logging.Handler] = {}
        if discover:
            self._discover_plugins()

    # -- plugins ----------------------------------------------------------

    def _discover_plugins(self):
        """Register the built-in certificates, then those published via entry points."""
        from .plugins import BUILTIN_CERTIFICATES

        for name, cls in BUILTIN_CERTIFICATES.items():
            self.register_certificate(name, cls())
        for ep in importlib.metadata.entry_points(group="homoclinickit.certificates"):
            if ep.name in self._certificates:
                continue
            try:
                cls = ep.load()
            except Exception:
                logger.exception("plugin_load_failed", extra={"plugin": ep.name})
                continue
            if isinstance(cls, type) and issubclass(cls, CertificatePlugin):
                self.register_certificate(ep.name, cls())

    def register_certificate(self, name: str, plugin: CertificatePlugin):
        """Register a certificate and inject a logger for observability."""
        try:
            plugin.logger = logging.getLogger(f"homoclinickit.plugins.{name}")
        except Exception:
            pass
        self._certificates[name] = plugin

    def get_available_certificates(self) -> List[str]:
        return list(self._certificates)

    # -- logging ----------------------------------------------------------

    def _configure_logging(self, cfg: RunConfig) -> None:
        """Honour log_level and attach one JSON-lines FileHandler per log_path."""
        try:
            level_no = getattr(logging, str(cfg.log_level).upper(), logging.INFO)
            pkg_logger = logging.getLogger("homoclinickit")
            pkg_logger.setLevel(level_no)
            if not cfg.log_path:
                return
            existing = self._log_handlers.get(cfg.log_path)
            if existing:
                existing.setLevel(level_no)
                return
            fh = logging.FileHandler(cfg.log_path, encoding="utf-8")
            fh.setLevel(level_no)
            fh.setFormatter(_JSONFormatter())
            pkg_logger.addHandler(fh)
            self._log_handlers[cfg.log_path] = fh
        except Exception:
            # Logging must never break a run
            try:
                logger.exception("Failed to configure logging")
            except Exception:
                pass

    def close(self) -> None:
        """Detach and close the file handlers this engine attached."""
        pkg_logger = logging.getLogger("homoclinickit")
        for fh in self._log_handlers.values():
            pkg_logger.removeHandler(fh)
            fh.close()
        self._log_handlers.clear()

    # -- pipeline ---------------------------------------------------------

    def run_pipeline(self, cfg: Optional[RunConfig] = None, stop_after: Optional[str] = None,
                     stages: Optional[Iterable[str]] = None,
                     certificates: Optional[Sequence[str]] = None) -> PipelineReport:
        """Run the stages in order, halting at the first failure.

        ``stop_after`` ends the run after the named stage; ``stages`` restricts
        the run to a subset (dependencies must be included).
        """
        cfg = cfg or default_config()
        if stop_after is not None and stop_after not in STAGES:
            raise ValidationError(f"unknown stage {stop_after!r}; expected one of {STAGES}")
        wanted = list(STAGES) if stages is None else [s for s in STAGES if s in set(stages)]
        if stages is not None and len(wanted) != len(set(stages)):
            raise ValidationError(f"unknown stage in {sorted(set(stages) - set(STAGES))}")
        if stop_after is not None:
            wanted = [s for s in wanted if STAGES.index(s) <= STAGES.index(stop_after)]
        self._configure_logging(cfg)
        report = PipelineReport(cfg)
        logger.info("pipeline_start", extra={"stages": wanted, "seed": cfg.seed})

        for stage in STAGES:
            if stage not in wanted or report.error is not None:
                report.stages[stage] = StageRecord(stage, SKIPPED)
                continue
            missing = [d for d in DEPENDS[stage] if not report.completed(d)]
            if missing:
                report.stages[stage] = StageRecord(stage, SKIPPED, error=f"needs {', '.join(missing)}")
                continue
            t0 = time.perf_counter()
            try:
                getattr(self, f"_stage_{stage}")(report)
            except Exception as e:
                err = e if isinstance(e, StageError) else StageError(stage, e)
                ms = (time.perf_counter() - t0) * 1000.0
                report.stages[stage] = StageRecord(stage, FAILED, ms, str(err))
                report.error = err
                logger.error("stage_failed", extra={"stage": stage, "err": str(e),
                                                    "certificate": isinstance(e, CertificateFailure)})
                continue
            ms = (time.perf_counter() - t0) * 1000.0
            report.stages[stage] = StageRecord(stage, OK, ms)
            logger.info("stage_done", extra={"stage": stage, "time_ms": ms})

        if cfg.analysis.certificates:
            report.certificates = self.run_certificates(report, certificates)
        logger.info("pipeline_done", extra={"passed": report.passed, "failed_stage": report.failed_stage})
        return report

    def run_certificates(self, report: PipelineReport,
                         names: Optional[Sequence[str]] = None) -> List[CertificateResult]:
        """Run certificates whose required stages completed; the rest are flagged 'skipped'."""
        out = []
        for name in (names if names is not None else list(self._certificates)):
            plugin = self._certificates.get(name)
            if plugin is None:
                raise ValidationError(f"unknown certificate {name!r}")
            missing = [s for s in plugin.requires if not report.completed(s)]
            if missing:
                out.append(CertificateResult(name, False, flags=["skipped"],
                                             metrics={"missing_stages": missing}))
                continue
            t0 = time.perf_counter()
            res = plugin.safe_run(name, report, {"config": report.config})
            res.time_ms = (time.perf_counter() - t0) * 1000.0
            logger.info("certificate", extra={"certificate": name, "passed": res.passed, "value": res.value})
            out.append(res)
        return out

    # -- stages -----------------------------------------------------------

    def _stage_build(self, report: PipelineReport) -> None:
        m, tol = report.config.model, report.config.tolerances
        params = LocalModelParams(m.mu, m.alpha, m.a, m.b, m.nu, m.kappa, m.eps_pert, m.h, tol.res, tol.symp)
        spec = GlobalMapSpec(m.x0, m.y1, m.global_matrix(), tol.symp, tol.trans)
        # resonance is checked when the spectrum is classified
        report.model = build_model(params, spec, m.gluing_radius, m.moser_eps, require_nonresonant=False)

    def _stage_fixed_point(self, report: PipelineReport) -> None:
        tol = report.config.tolerances
        local = report.model.local
        p = find_fixed_point(local, np.zeros(4))
        report.fixed_point = p
        report.spectrum = classify_spectrum(local.jac(p), tol.eig, tol.res, tol.symp)
        report.resonances = enumerate_resonances(report.spectrum.alpha, 3, tol.res)
        report.normal_form = extract_normal_form(local, report.spectrum, p, tol_div=tol.div,
                                                 tol_nf=tol.nf, tol_res=tol.res)

    def _stage_homoclinic(self, report: PipelineReport) -> None:
        cfg = report.config
        model = report.model
        orbit = assemble_homoclinic_orbit(model, cfg.analysis.n_max)
        report.orbit = orbit.with_settle_index(cfg.analysis.N)
        unstable = continue_manifold_curve(model, UNSTABLE, 1.2 * model.spec.y1, tol_mfld=cfg.tolerances.mfld)
        stable = continue_manifold_curve(model, STABLE, 1.2 * model.spec.x0, tol_mfld=cfg.tolerances.mfld)
        near = unstable.points[np.linalg.norm(unstable.points - model.q_minus, axis=1) <= model.gluing_radius]
        report.manifold_scan = homoclinic_distance(model.global_map(near), stable.points,
                                                   exclude=report.fixed_point)

    def _stage_scattering(self, report: PipelineReport) -> None:
        cfg = report.config
        an, tol = cfg.analysis, cfg.tolerances
        report.sequence = linearize_along_orbit(report.model, report.orbit, tol.symp)
        report.transversality = check_transversality(report.model, report.orbit, an.N, tol.trans)
        report.scattering = build_scattering_map(report.model, report.orbit, an.N,
                                                 None if an.adaptive_T else an.T,
                                                 tol_trans=tol.trans, seq=report.sequence)

    def _stage_genericity(self, report: PipelineReport) -> None:
        report.genericity = check_genericity(report.scattering, tol_root=report.config.tolerances.root)

    def _stage_kam_scan(self, report: PipelineReport) -> None:
        cfg = report.config
        an, tol = cfg.analysis, cfg.tolerances
        model = report.model
        r_max = model.moser_eps * float(np.sqrt(2.0 * an.I_max))
        radius = min(max(0.3, 1.5 * r_max), 0.9 * model.params.h)
        cm = restrict_to_center(model, radius=radius, seed=cfg.seed)
        report.center_map = cm
        crit = KamCriteria(n_iter=an.kam_iterations, tol_kam=tol.kam, threads=an.threads)
        report.kam_curves = detect_kam_curves(cm, an.I_grid, crit)
        rot = [c.rotation_number for c in report.kam_curves if c.verdict == QUASIPERIODIC]
        if len(rot) >= 2:
            for q in an.periods:
                report.periodic_orbits.extend(find_periodic_orbits(cm, q, (min(rot), max(rot)),
                                                                   tol_class=tol.class_))

    def _stage_traces(self, report: PipelineReport) -> None:
        cfg = report.config
        an = cfg.analysis
        model = report.model
        report.sigma = build_sigma_disk(model, an.chart_radius)
        curves = [c for c in report.kam_curves if c.verdict == QUASIPERIODIC]
        jobs = [(c, side) for c in curves for side in (STABLE, UNSTABLE)]

        def job(item):
            curve, side = item
            return trace_manifold_on_sigma(model, curve, side, report.sigma, an.trace_vertices)

        if an.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=an.threads) as pool:
                done = list(pool.map(job, jobs))
        else:
            done = [job(j) for j in jobs]
        report.traces = [(c, done[2 * k], done[2 * k + 1]) for k, c in enumerate(curves)]
        logger.info("traces", extra={"curves": len(curves), "vertices": an.trace_vertices})

    def _stage_intersections(self, report: PipelineReport) -> None:
        tol = report.config.tolerances
        report.intersections = [
            count_transverse_intersections(ws, wu, report.scattering, tol.angle, tol.match, tol.kam)
            for _, ws, wu in report.traces
        ]


def run_pipeline(cfg: Optional[RunConfig] = None, stop_after: Optional[str] = None,
                 engine: Optional[Engine] = None) -> PipelineReport:
    """Convenience wrapper around :meth:`Engine.run_pipeline`."""
    return (engine or Engine()).run_pipeline(cfg, stop_after)
