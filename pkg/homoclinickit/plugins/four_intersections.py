"""Every KAM curve yields four transverse crossings at the predicted bearings."""

from ..plugin_api import CertificatePlugin, CertificateResult
from ..scattering import GENERIC


class FourIntersectionsCertificate(CertificatePlugin):

    requires = ["intersections", "genericity"]

    def describe(self) -> str:
        return "Four transverse homoclinic crossings per invariant curve"

    def run(self, context, params: dict) -> CertificateResult:
        cfg = params["config"]
        cls = context.genericity.classification
        reports = context.intersections
        counts = [r.count for r in reports]
        angles = [float(a) for r in reports for a in r.angles]
        flags = [] if cls == GENERIC else [cls]
        if not reports:
            flags.append("no-curves")
        passed = cls == GENERIC and bool(reports) and all(r.passed for r in reports)
        return CertificateResult(
            "four_intersections", passed, min(angles, default=None), cfg.tolerances.angle,
            metrics={"counts": counts, "statuses": [r.status for r in reports],
                     "matched": [int(r.matched.sum()) for r in reports]},
            flags=flags,
        )
