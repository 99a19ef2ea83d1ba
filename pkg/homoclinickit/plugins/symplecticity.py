"""Symplecticity of the model Jacobians on random domain points."""

import numpy as np

from ..plugin_api import CertificatePlugin, CertificateResult
from ..symplectic_core import symplectic_residual


def sample_points(model, n: int, seed: int) -> np.ndarray:
    """Uniform points in the inner half of the local domain cube."""
    h = model.params.h
    return np.random.default_rng(seed).uniform(-0.5 * h, 0.5 * h, size=(n, 4))


class SymplecticityCertificate(CertificatePlugin):
    """J^T S J = S for the local and global Jacobians."""

    requires = ["build"]

    def describe(self) -> str:
        return "Jacobian symplecticity residual on random domain points"

    def run(self, context, params: dict) -> CertificateResult:
        cfg = params["config"]
        n = int(params.get("samples", 1000))
        model = context.model
        q = sample_points(model, n, cfg.seed)
        local = float(np.max(symplectic_residual(model.local.jac(q))))
        glob = float(np.max(symplectic_residual(model.global_map.jac(q))))
        value = max(local, glob)
        tol = min(float(params.get("threshold", 1e-10)), cfg.tolerances.symp)
        return CertificateResult(
            "symplecticity", value <= tol, value, tol,
            metrics={"samples": n, "local": local, "global": glob},
        )
