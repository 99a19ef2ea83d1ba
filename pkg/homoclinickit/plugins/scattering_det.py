"""Unit determinant and stabilization of the scattering matrix in N."""

import numpy as np

from ..plugin_api import CertificatePlugin, CertificateResult
from ..scattering import scattering_stability

# differences below this are rounding noise and are not used for the ratio test
_NOISE = 1e-12


class ScatteringDetCertificate(CertificatePlugin):
    """|det A_N - 1| <= 1e-8 for N = 4, 6, ... and geometric Cauchy decrements."""

    requires = ["scattering"]

    def describe(self) -> str:
        return "Scattering matrix is area-preserving and converges in N"

    def run(self, context, params: dict) -> CertificateResult:
        top = min(int(params.get("N_max", 16)), context.orbit.n_max - 8)
        Ns = list(range(4, top + 1, 2))
        if len(Ns) < 2:
            return CertificateResult("scattering_det", False, None, 1e-8,
                                     metrics={"n_max": context.orbit.n_max}, flags=["orbit-too-short"])
        rep = scattering_stability(context.model, context.orbit, Ns)
        dets = [float(np.linalg.det(A)) for A in rep.charts]
        det_res = max(abs(d - 1.0) for d in dets)
        diffs = list(rep.differences)
        ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > _NOISE and b > _NOISE]
        ratio = max(ratios, default=0.0)
        stable = len(set(rep.classifications)) == 1
        return CertificateResult(
            "scattering_det", det_res <= 1e-8 and ratio <= 0.9 and stable, det_res, 1e-8,
            metrics={"Ns": Ns, "dets": dets, "differences": diffs, "max_ratio": ratio,
                     "classification": rep.classifications[-1]},
            flags=[] if stable else ["classification-unstable"],
        )
