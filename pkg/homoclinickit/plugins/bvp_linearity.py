"""Bounded-solution solver against the stepwise system, and superposition."""

import numpy as np

from ..plugin_api import CertificatePlugin, CertificateResult
from ..scattering import BACKWARD, FORWARD, BvpBoundaryData, derotate, solve_bvp, verify_linearity


class BvpLinearityCertificate(CertificatePlugin):
    """Stepwise residual and linearity violations within tolerances.lin, contraction < 1."""

    requires = ["scattering"]

    def describe(self) -> str:
        return "Contraction solutions satisfy the linear system and superpose"

    def run(self, context, params: dict) -> CertificateResult:
        cfg = params["config"]
        N = cfg.analysis.N
        T = None if cfg.analysis.adaptive_T else cfg.analysis.T
        seq = derotate(context.sequence)
        rng = np.random.default_rng(cfg.seed)
        stepwise, lipschitz, unconverged = 0.0, 0.0, 0
        for k in range(int(params.get("boundary_samples", 20))):
            v, c1, c2 = rng.normal(size=3)
            data = BvpBoundaryData(float(v), (float(c1), float(c2)), FORWARD if k % 2 == 0 else BACKWARD, N)
            sol = solve_bvp(seq, data, T, tol_bvp=cfg.tolerances.bvp)
            stepwise = max(stepwise, sol.residual)
            lipschitz = max(lipschitz, sol.lipschitz)
            unconverged += not sol.converged
        lin = verify_linearity(seq, N, int(params.get("samples", 100)), T, rng, cfg.tolerances.lin)
        tol = cfg.tolerances.lin
        value = max(stepwise, lin.max_violation)
        return CertificateResult(
            "bvp_linearity", value <= tol and lipschitz < 1.0 and unconverged == 0, value, tol,
            metrics={"stepwise": stepwise, "split": lin.split, "homogeneity": lin.homogeneity,
                     "additivity": lin.additivity, "lipschitz": lipschitz, "unconverged": unconverged},
        )
