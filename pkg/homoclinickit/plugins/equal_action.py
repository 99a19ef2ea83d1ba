"""The stable and unstable traces of each KAM curve enclose equal areas."""

from ..plugin_api import CertificatePlugin, CertificateResult
from ..sigma_analysis import equal_action_defect


class EqualActionCertificate(CertificatePlugin):
    """Relative area defect <= 1e-6 unperturbed, 1e-4 perturbed."""

    requires = ["traces"]

    def describe(self) -> str:
        return "Equal symplectic area inside w_s and w_u"

    def run(self, context, params: dict) -> CertificateResult:
        cfg = params["config"]
        tol = 1e-6 if cfg.model.eps_pert == 0.0 else 1e-4
        defects = {f"{curve.action:.17g}": equal_action_defect(ws, wu) for curve, ws, wu in context.traces}
        if not defects:
            return CertificateResult("equal_action", False, None, tol, flags=["no-curves"])
        value = max(defects.values())
        return CertificateResult("equal_action", value <= tol, value, tol, metrics={"defects": defects})
