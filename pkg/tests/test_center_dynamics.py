"""Tests for the center map, KAM scan, periodic orbits, fibers and cylinders."""

import dataclasses
import math

import numpy as np
import pytest

from homoclinickit.center_dynamics import (
    DEGENERATE_FAMILY,
    ELLIPTIC,
    HYPERBOLIC,
    RESONANT,
    CenterMap,
    KamCriteria,
    asymptotic_center_point,
    build_kam_cylinder,
    continued_fraction,
    detect_kam_curves,
    diophantine_like,
    fenichel_residual,
    find_periodic_orbits,
    graph_transform_direction,
    kam_rows,
    restrict_to_center,
    rotation_number,
    rotation_number_estimate,
    solve_fiber,
)
from homoclinickit.errors import CenterNotInvariant, EscapedAnnulus, NoContraction, ValidationError
from homoclinickit.model_zoo import demo_model
from homoclinickit.symplectic_core import SmoothMap4, rotation


def kicked_twist(alpha=1.0, nu=1.0, eps=0.05):
    """R_{alpha + nu r^2} followed by the shear v -> v - eps u^5."""

    def evaluate(z):
        w = rotation(alpha + nu * (z @ z)) @ z
        return np.array([w[0], w[1] - eps * w[0] ** 5])

    def jac(z):
        R = rotation(alpha + nu * (z @ z))
        w = R @ z
        perp = R @ np.array([-z[1], z[0]])
        JT = R + np.outer(perp, 2.0 * nu * z)
        K = np.array([[1.0, 0.0], [-5.0 * eps * w[0] ** 4, 1.0]])
        return K @ JT

    return CenterMap(evaluate, alpha, nu, 0.1, jac)


def coupled_linear_model(c=0.3, scale=1.0):
    """Linear map with a y -> center coupling g = (c, 0); W^c and {x = 0} stay invariant."""
    base = demo_model(eps_pert=0.0)
    mu = base.mu
    R = scale * rotation(base.alpha)
    Rinv = np.linalg.inv(R)
    g = np.array([c, 0.0])

    def evaluate(q):
        uv = q[..., 2:] @ R.T + q[..., 1:2] * g
        return np.concatenate([mu * q[..., :1], q[..., 1:2] / mu, uv], axis=-1)

    def jac(q):
        J = np.zeros((4, 4))
        J[0, 0], J[1, 1] = mu, 1.0 / mu
        J[2:, 2:] = R
        J[2:, 1] = g
        return np.broadcast_to(J, np.shape(q)[:-1] + (4, 4)).copy()

    def inverse(q):
        y = mu * q[..., 1:2]
        uv = (q[..., 2:] - y * g) @ Rinv.T
        return np.concatenate([q[..., :1] / mu, y, uv], axis=-1)

    local = SmoothMap4("coupled", evaluate, jac, base.local.domain, 1e-9, inverse)
    return dataclasses.replace(base, local=local)


class TestRestriction:
    """Exact restriction to W^c."""

    def test_integrable_twist(self):
        """eps_pert = 0 gives R_{alpha + nu r^2}."""
        cm = restrict_to_center(demo_model(eps_pert=0.0))
        for z in ([0.1, 0.0], [0.05, -0.2], [0.0, 0.3]):
            z = np.array(z)
            expected = rotation(1.0 + 0.1 * (z @ z)) @ z
            np.testing.assert_allclose(cm(z), expected, atol=1e-14)

    def test_area_preserving(self):
        """|det - 1| <= 1e-10 on the sampled disk."""
        cm = restrict_to_center(demo_model())
        assert cm.area_residual <= 1e-10
        assert cm.moser_eps == 0.1

    def test_leaking_map(self):
        """A map that moves W^c off itself is refused."""
        base = demo_model()
        leak = SmoothMap4("leak", lambda q: base.local(q) + np.array([1e-6, 0.0, 0.0, 0.0]),
                          base.local.jac, base.local.domain)
        with pytest.raises(CenterNotInvariant):
            restrict_to_center(dataclasses.replace(base, local=leak))


class TestRotationNumber:
    """Weighted Birkhoff averages on W^c."""

    def setup_method(self):
        self.cm = restrict_to_center(demo_model(eps_pert=0.0))

    def test_closed_form(self):
        """alpha = 1, nu = 0.1, r^2 = 0.5 gives 1.05."""
        est = rotation_number_estimate(self.cm, (math.sqrt(0.5), 0.0), 2000)
        assert est.value == pytest.approx(1.05, abs=1e-10)
        assert est.error <= 1e-10

    def test_fixed_point(self):
        """The origin rotates by alpha."""
        assert rotation_number(self.cm, (0.0, 0.0)) == pytest.approx(1.0, abs=1e-12)

    def test_twist_direction(self):
        """Flipping nu flips the slope of rho(I)."""
        neg = restrict_to_center(demo_model(eps_pert=0.0, nu=-0.1))
        inner, outer = (0.1, 0.0), (0.3, 0.0)
        assert rotation_number(self.cm, outer, 500) > rotation_number(self.cm, inner, 500)
        assert rotation_number(neg, outer, 500) < rotation_number(neg, inner, 500)

    def test_escape(self):
        """An expanding map leaves the annulus."""
        cm = CenterMap(lambda z: 1.5 * np.asarray(z), 1.0, 0.1)
        with pytest.raises(EscapedAnnulus):
            rotation_number(cm, (0.1, 0.0), 100)


class TestContinuedFraction:
    """Partial quotients and the Diophantine proxy."""

    def test_golden_mean(self):
        """All partial quotients of the golden mean are 1."""
        x = (math.sqrt(5.0) - 1.0) / 2.0
        assert continued_fraction(x, 8) == [0] + [1] * 8
        assert diophantine_like(x)

    def test_rational(self):
        """A rational number terminates early and fails the filter."""
        assert continued_fraction(0.25, 8) == [0, 4]
        assert not diophantine_like(0.25)

    def test_large_quotient(self):
        """A quotient above 50 fails the filter."""
        x = 1.0 / (3.0 + 1.0 / (100.0 + (math.sqrt(5.0) - 1.0) / 2.0))
        assert continued_fraction(x, 8)[:3] == [0, 3, 100]
        assert not diophantine_like(x)


class TestKamScan:
    """Invariant-curve detection."""

    def test_integrable_circles(self):
        """eps_pert = 0: every grid circle is invariant to 1e-12."""
        cm = restrict_to_center(demo_model(eps_pert=0.0))
        curves = detect_kam_curves(cm, [0.5, 1.0, 2.0, 4.0], KamCriteria(n_iter=1024))
        for c in curves:
            assert c.residual <= 1e-12
            assert c.circle_deviation <= 1e-9
            assert c.rotation_number == pytest.approx(1.0 + 0.1 * 2.0 * 0.01 * c.action, abs=1e-10)

    def test_perturbed_curves(self):
        """Small eps_pert still gives well-fitted curves in grid order."""
        cm = restrict_to_center(demo_model())
        grid = [1.0, 2.0, 3.0]
        curves = detect_kam_curves(cm, grid, KamCriteria(n_iter=2048))
        assert [c.action for c in curves] == grid
        assert all(c.residual <= 1e-8 for c in curves)
        assert len(kam_rows(curves)) == 3

    def test_closeness_scales_with_eps(self):
        """The deviation from the action circle shrinks with the Moser scale."""
        devs = []
        for eps in (0.05, 0.1, 0.2):
            cm = restrict_to_center(demo_model(moser_eps=eps))
            devs.append(detect_kam_curves(cm, [2.0], KamCriteria(n_iter=2048))[0].circle_deviation)
        assert devs[0] < devs[1] < devs[2] < 0.05

    def test_threads_deterministic(self):
        """A threaded scan matches the sequential one."""
        cm = restrict_to_center(demo_model())
        seq = detect_kam_curves(cm, [1.0, 2.0], KamCriteria(n_iter=512))
        par = detect_kam_curves(cm, [1.0, 2.0], KamCriteria(n_iter=512, threads=2))
        assert [c.rotation_number for c in seq] == [c.rotation_number for c in par]

    def test_zero_twist_refused(self):
        """nu = 0 has no KAM scan."""
        with pytest.raises(ValidationError):
            detect_kam_curves(CenterMap(lambda z: z, 1.0, 0.0), [1.0])


class TestPeriodicOrbits:
    """Birkhoff pairs around a resonance."""

    def test_birkhoff_pair(self):
        """The 1/5 resonance of a kicked twist map has alternating elliptic and hyperbolic orbits."""
        cm = kicked_twist()
        recs = find_periodic_orbits(cm, 5, (1.2, 1.3))
        kinds = [r.classification for r in recs]
        assert kinds.count(ELLIPTIC) >= 1
        assert kinds.count(ELLIPTIC) == kinds.count(HYPERBOLIC)
        assert DEGENERATE_FAMILY not in kinds
        for r in recs:
            assert r.residual <= 1e-10
            assert r.rotation == (1, 5)
            assert r.points.shape == (5, 2)
            if r.classification == HYPERBOLIC:
                assert abs(r.trace) > 2.0

    def test_integrable_family(self):
        """Without the kick the resonant circle is a degenerate family."""
        cm = kicked_twist(eps=0.0)
        recs = find_periodic_orbits(cm, 5, (1.2, 1.3), n_radial=3, n_angular=4)
        assert recs
        assert all(r.classification == DEGENERATE_FAMILY for r in recs)

    def test_broken_jacobian_skips_seeds(self):
        """Seeds whose Newton step cannot be formed are dropped, not raised."""
        cm = dataclasses.replace(kicked_twist(), jacobian_rule=lambda z: np.full((2, 2), np.nan))
        assert find_periodic_orbits(cm, 5, (1.2, 1.3), n_radial=3, n_angular=4) == []

    def test_escaping_seeds_are_dropped(self):
        """A strong kick sends some seeds to overflow; the search still returns."""
        cm = kicked_twist(eps=50.0)
        recs = find_periodic_orbits(cm, 5, (1.2, 1.3), n_radial=3, n_angular=8)
        assert all(np.all(np.isfinite(r.points)) for r in recs)

    def test_periodic_point_is_resonant(self):
        """The scan does not call a periodic orbit quasiperiodic."""
        cm = kicked_twist()
        ell = next(r for r in find_periodic_orbits(cm, 5, (1.2, 1.3)) if r.classification == ELLIPTIC)
        u, v = ell.points[0]
        phi = math.atan2(v, u)
        # conjugate so that the orbit starts on the positive u-axis
        rotated = CenterMap(lambda z: rotation(-phi) @ cm(rotation(phi) @ z), cm.alpha, cm.nu, cm.moser_eps)
        I = float(cm.action(math.hypot(u, v)))
        curve = detect_kam_curves(rotated, [I], KamCriteria(n_iter=1000))[0]
        assert curve.verdict == RESONANT


class TestFiber:
    """Line-transport recursion and growth diagnostics."""

    def test_uncoupled_fibers_are_coordinate_lines(self):
        """kappa = 0, eps_pert = 0: slopes vanish and alpha* = mu."""
        model = demo_model(eps_pert=0.0)
        m = np.array([0.0, 0.0, 0.2, 0.0])
        for side in ("unstable", "stable"):
            sol = solve_fiber(model, m, side)
            assert np.max(np.abs(sol.slopes)) <= 1e-14
            assert sol.alpha_star == pytest.approx(0.5, abs=1e-12)
            assert sol.certified
        np.testing.assert_allclose(graph_transform_direction(model, m), [0.0, 0.0], atol=1e-14)

    def test_alpha_bracket(self):
        """alpha* lies in [mu/(1 + mu d1), mu/(1 - mu d1)]."""
        sol = solve_fiber(demo_model(a=0.3, b=-0.2), np.array([0.0, 0.0, 0.25, 0.1]))
        assert sol.delta1 > 0.0
        lo, hi = sol.alpha_bounds
        assert lo <= sol.alpha_star <= hi
        t2, t1 = sol.tau_bounds
        assert t2 < 0.0 < t1
        assert sol.certified

    def test_coupled_slope(self):
        """Constant coupling g gives the slope mu (I - mu R)^-1 g."""
        model = coupled_linear_model()
        sol = solve_fiber(model, np.array([0.0, 0.0, 0.2, 0.1]))
        R = rotation(model.alpha)
        expected = np.linalg.solve(np.eye(2) - model.mu * R, model.mu * np.array([0.3, 0.0]))
        np.testing.assert_allclose(sol.slope(0), expected, atol=1e-10)
        assert sol.converged

    def test_graph_transform_oracle(self):
        """The transported trial line converges to the fiber."""
        model = coupled_linear_model()
        m = np.array([0.0, 0.0, -0.1, 0.15])
        sol = solve_fiber(model, m)
        np.testing.assert_allclose(graph_transform_direction(model, m, k=50), sol.slope(0), atol=1e-8)

    def test_fenichel_inclusion(self):
        """f^-1 of the fiber over m lies on the fiber over f^-1(m)."""
        model = coupled_linear_model()
        sol = solve_fiber(model, np.array([0.0, 0.0, 0.2, 0.0]))
        assert fenichel_residual(model, sol) <= 1e-10

    def test_foot_point(self):
        """Points on a fiber project to its base point."""
        model = coupled_linear_model()
        m = np.array([0.0, 0.0, 0.1, 0.05])
        sol = solve_fiber(model, m)
        z = m + 1e-3 * sol.direction(0) / sol.direction(0)[1]
        np.testing.assert_allclose(asymptotic_center_point(model, z, "unstable"), m, atol=1e-12)

    def test_no_contraction(self):
        """A strongly expanding center is refused."""
        with pytest.raises(NoContraction):
            solve_fiber(coupled_linear_model(scale=3.0), np.array([0.0, 0.0, 0.1, 0.0]), T=5)

    def test_off_center_base(self):
        """Base points must lie on W^c."""
        with pytest.raises(ValidationError):
            solve_fiber(demo_model(), np.array([0.1, 0.0, 0.1, 0.0]))


class TestKamCylinder:
    """Sampled invariant cylinders."""

    def setup_method(self):
        self.model = demo_model(eps_pert=0.0)
        cm = restrict_to_center(self.model)
        self.curve = detect_kam_curves(cm, [2.0], KamCriteria(n_iter=512))[0]

    def test_unstable_cylinder_is_product(self):
        """W^u(gamma) = {x = 0, u^2 + v^2 = r^2} extended in y."""
        cyl = build_kam_cylinder(self.model, self.curve, "unstable", extent=0.3, n_base=16, n_fiber=5)
        assert np.all(cyl.grid[..., 0] == 0.0)
        r2 = np.sum(cyl.grid[..., 2:] ** 2, axis=-1)
        np.testing.assert_allclose(r2, 0.04, atol=1e-12)
        np.testing.assert_allclose(cyl.grid[:, -1, 1], 0.3, atol=1e-12)
        assert cyl.invariance_residual <= 1e-10
        assert cyl.lagrangian_residual <= 1e-6
        assert len(cyl.rows()) == 80

    def test_stable_cylinder(self):
        """W^s(gamma) extends in x with y = 0."""
        cyl = build_kam_cylinder(self.model, self.curve, "stable", extent=0.2, n_base=8, n_fiber=3)
        assert np.all(cyl.grid[..., 1] == 0.0)
        np.testing.assert_allclose(cyl.grid[:, -1, 0], 0.2, atol=1e-12)
        assert cyl.invariance_residual <= 1e-10
