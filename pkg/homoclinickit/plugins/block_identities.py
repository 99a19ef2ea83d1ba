"""Block identities of symplectic Jacobians."""

from ..plugin_api import CertificatePlugin, CertificateResult
from ..symplectic_core import check_symplectic_block_identities
from .symplecticity import sample_points


class BlockIdentitiesCertificate(CertificatePlugin):
    """a^T c, b^T d symmetric and d^T a - b^T c = E at random points."""

    requires = ["build"]

    def describe(self) -> str:
        return "Symplectic block identities of local-map Jacobians"

    def run(self, context, params: dict) -> CertificateResult:
        cfg = params["config"]
        n = int(params.get("samples", 1000))
        tol = min(float(params.get("threshold", 1e-10)), cfg.tolerances.symp)
        worst = {"symmetric_ac": 0.0, "symmetric_bd": 0.0, "unimodular": 0.0}
        for J in context.model.local.jac(sample_points(context.model, n, cfg.seed + 1)):
            rep = check_symplectic_block_identities(J, tol)
            for key in worst:
                worst[key] = max(worst[key], getattr(rep, key))
        value = max(worst.values())
        return CertificateResult("block_identities", value <= tol, value, tol,
                                 metrics={"samples": n, **worst})
