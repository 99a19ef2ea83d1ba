"""Tests for the built-in certificates on the demo pipeline run."""

import dataclasses

import numpy as np
import pytest

from homoclinickit.plugins import BUILTIN_CERTIFICATES
from homoclinickit.plugins.equal_action import EqualActionCertificate
from homoclinickit.plugins.four_intersections import FourIntersectionsCertificate
from homoclinickit.plugins.symplecticity import sample_points
from homoclinickit.scattering import NEAR_DEGENERATE


def run(name, report, **params):
    return BUILTIN_CERTIFICATES[name]().run(report, {"config": report.config, **params})


class TestRegistry:
    """Built-in table."""

    def test_names(self):
        """Eight certificates, each described and bound to stages."""
        assert set(BUILTIN_CERTIFICATES) == {
            "symplecticity", "block_identities", "transversality", "scattering_det",
            "bvp_linearity", "equal_action", "four_intersections", "fiber_certificates",
        }
        for cls in BUILTIN_CERTIFICATES.values():
            plugin = cls()
            assert plugin.describe()
            assert plugin.requires


class TestModelCertificates:
    """Checks on the built maps."""

    def test_sample_points_in_half_cube(self, demo_report):
        """Samples are seeded and stay in [-h/2, h/2]^4."""
        a = sample_points(demo_report.model, 100, 3)
        np.testing.assert_array_equal(a, sample_points(demo_report.model, 100, 3))
        assert np.max(np.abs(a)) <= 0.5

    def test_symplecticity(self, demo_report):
        """Local and global Jacobians are symplectic to 1e-10."""
        res = run("symplecticity", demo_report)
        assert res.passed
        assert res.metrics["samples"] == 1000
        assert res.value <= 1e-10

    def test_block_identities(self, demo_report):
        """The three block identities hold on random points."""
        res = run("block_identities", demo_report, samples=200)
        assert res.passed
        assert set(res.metrics) >= {"symmetric_ac", "symmetric_bd", "unimodular"}


class TestScatteringCertificates:
    """Transversality, determinant and bounded solutions."""

    def test_transversality(self, demo_report):
        """The block determinant equals d11^2 for the run and for random global maps."""
        res = run("transversality", demo_report, random_matrices=4)
        assert res.passed
        assert res.metrics["checked"] == 5
        assert res.value <= 1e-8

    def test_scattering_det(self, demo_report):
        """det A_N = 1 for N = 4 .. 16 and the classification is stable."""
        res = run("scattering_det", demo_report)
        assert res.passed
        assert res.metrics["Ns"] == [4, 6, 8, 10, 12, 14, 16]
        assert all(abs(d - 1.0) <= 1e-8 for d in res.metrics["dets"])

    def test_scattering_det_short_orbit(self, demo_report):
        """An orbit too short for two values of N is reported, not crashed on."""
        res = run("scattering_det", demo_report, N_max=4)
        assert not res.passed
        assert res.flags == ["orbit-too-short"]

    def test_bvp_linearity(self, demo_report):
        """Solutions satisfy the stepwise system and superpose."""
        res = run("bvp_linearity", demo_report, samples=10, boundary_samples=6)
        assert res.passed
        assert res.metrics["lipschitz"] < 1.0
        assert res.metrics["unconverged"] == 0


class TestSectionCertificates:
    """Equal action and the intersection count."""

    def test_equal_action(self, demo_report):
        """Perturbed demo: relative area defect within 1e-4."""
        res = EqualActionCertificate().run(demo_report, {"config": demo_report.config})
        assert res.passed
        assert res.threshold == pytest.approx(1e-4)
        assert len(res.metrics["defects"]) == len(demo_report.traces)

    def test_equal_action_without_curves(self, demo_report):
        """No traced curves fails with a flag."""
        empty = dataclasses.replace(demo_report, traces=[])
        res = EqualActionCertificate().run(empty, {"config": demo_report.config})
        assert not res.passed
        assert res.flags == ["no-curves"]

    def test_four_intersections(self, demo_report):
        """Every curve has four matched transverse crossings."""
        res = FourIntersectionsCertificate().run(demo_report, {"config": demo_report.config})
        assert res.passed
        assert res.metrics["counts"] == [4] * len(demo_report.intersections)
        assert res.value >= demo_report.config.tolerances.angle

    def test_four_intersections_needs_generic(self, demo_report):
        """A non-generic classification fails and is named in the flags."""
        other = dataclasses.replace(demo_report.genericity, classification=NEAR_DEGENERATE)
        res = FourIntersectionsCertificate().run(dataclasses.replace(demo_report, genericity=other),
                                                 {"config": demo_report.config})
        assert not res.passed
        assert NEAR_DEGENERATE in res.flags


class TestFiberCertificate:
    """Fiber direction fields over the first invariant curve."""

    def test_demo(self, demo_report):
        """Both sides agree with the graph transform and are certified."""
        res = run("fiber_certificates", demo_report)
        assert res.passed
        for side in ("unstable", "stable"):
            m = res.metrics[side]
            assert m["oracle_gap"] <= 1e-8
            assert m["alpha_star"] < 1.0 and m["rho_star"] < 1.0 and m["tau_star"] < 0.5
