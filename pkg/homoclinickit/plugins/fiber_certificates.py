"""Fiber direction fields: oracle agreement, growth rates and invariance."""

import numpy as np

from ..center_dynamics import QUASIPERIODIC, STABLE, UNSTABLE, fenichel_residual, graph_transform_direction, solve_fiber
from ..plugin_api import CertificatePlugin, CertificateResult


class FiberCertificate(CertificatePlugin):
    """Fixed point vs graph transform <= 1e-8, alpha*, rho* < 1, tau* < 1/2, invariance <= 1e-8."""

    requires = ["kam_scan"]

    def describe(self) -> str:
        return "Fiber fixed point, growth diagnostics and Fenichel invariance"

    def run(self, context, params: dict) -> CertificateResult:
        cfg = params["config"]
        model = context.model
        curves = [c for c in context.kam_curves if c.verdict == QUASIPERIODIC]
        r = float(curves[0].radius(0.0)) if curves else model.moser_eps * np.sqrt(2.0 * cfg.analysis.I_min)
        m = np.array([0.0, 0.0, r, 0.0])
        metrics, value, certified = {}, 0.0, True
        for side in (UNSTABLE, STABLE):
            sol = solve_fiber(model, m, side, cfg.analysis.fiber_T, cfg.tolerances.fiber)
            oracle = graph_transform_direction(model, m, side, k=cfg.analysis.fiber_T)
            gap = float(np.max(np.abs(sol.slope(0) - oracle)))
            inv = fenichel_residual(model, sol)
            value = max(value, gap, inv)
            certified = certified and sol.certified
            metrics[side] = {"oracle_gap": gap, "invariance": inv, "alpha_star": sol.alpha_star,
                             "rho_star": sol.rho_star, "tau_star": sol.tau_star,
                             "lipschitz": sol.lipschitz}
        return CertificateResult("fiber_certificates", certified and value <= 1e-8, value, 1e-8,
                                 metrics={"radius": r, **metrics})
