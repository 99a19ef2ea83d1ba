"""Transversality determinant identity on the run model and random global maps."""

import numpy as np

from ..errors import NonSymplecticM, TransversalityFailure
from ..model_zoo import GlobalMapSpec, build_model, random_symplectic_matrix
from ..plugin_api import CertificatePlugin, CertificateResult
from ..scattering import check_transversality


def _relative(rep) -> float:
    return rep.delta_residual / (1.0 + rep.d11 ** 2)


class TransversalityCertificate(CertificatePlugin):
    """|Delta - d11^2| <= 1e-8 (1 + d11^2), also for random symplectic M."""

    requires = ["scattering"]

    def describe(self) -> str:
        return "Block determinant equals d11^2 along the homoclinic orbit"

    def run(self, context, params: dict) -> CertificateResult:
        cfg = params["config"]
        n_random = int(params.get("random_matrices", 10))
        rng = np.random.default_rng(cfg.seed)
        model, orbit, N = context.model, context.orbit, cfg.analysis.N
        values = [_relative(context.transversality)]
        flags = []
        attempts = 0
        while len(values) < n_random + 1 and attempts < 5 * n_random:
            attempts += 1
            M = model.spec.M @ random_symplectic_matrix(rng, scale=0.3)
            try:
                other = build_model(model.params, GlobalMapSpec(model.spec.x0, model.spec.y1, M),
                                    model.gluing_radius, model.moser_eps, require_nonresonant=False)
            except (NonSymplecticM, TransversalityFailure):
                continue
            try:
                values.append(_relative(check_transversality(other, orbit, N)))
            except TransversalityFailure:
                values.append(float("inf"))
                flags.append("random-M-failed")
        value = max(values)
        return CertificateResult(
            "transversality", value <= 1e-8, value, 1e-8,
            metrics={"d11": context.transversality.d11, "tangent_sine": context.transversality.tangent_sine,
                     "checked": len(values)},
            flags=sorted(set(flags)),
        )
