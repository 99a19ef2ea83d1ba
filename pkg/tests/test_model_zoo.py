"""Tests for the local, global and glued model maps."""

import math

import numpy as np
import pytest

from homoclinickit.errors import (
    GluingOverlap,
    NonSymplecticM,
    StrongResonance,
    TransversalityFailure,
    ValidationError,
    ZeroTwist,
)
from homoclinickit.model_zoo import (
    GlobalMapSpec,
    LocalModelParams,
    build_global_map,
    build_local_map,
    build_model,
    default_global_matrix,
    demo_model,
    fit_xy_drift,
    random_symplectic_matrix,
    transversality_determinant,
)
from homoclinickit.symplectic_core import block_diag, invert, rotation, symplectic_residual


class TestLocalMap:
    """Normal-form local map."""

    def test_linear_when_nonlinearities_off(self):
        """a = b = nu = kappa = eps = 0 gives the linear saddle-center."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, nu=0.0), require_twist=False)
        q = np.array([0.3, -0.1, 0.2, 0.4])
        expected = block_diag(np.diag([0.5, 2.0]), rotation(1.0)) @ q
        np.testing.assert_allclose(f(q), expected, atol=1e-15)

    def test_center_twist(self):
        """(0, 0, u, v) rotates by alpha + nu (u^2 + v^2)."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, nu=0.3))
        u, v = 0.2, -0.1
        out = f(np.array([0.0, 0.0, u, v]))
        np.testing.assert_allclose(out[2:], rotation(1.0 + 0.3 * (u * u + v * v)) @ [u, v], atol=1e-15)
        assert out[0] == 0.0 and out[1] == 0.0

    def test_strong_resonance(self):
        """alpha = 2 pi / 3 is rejected."""
        with pytest.raises(StrongResonance):
            build_local_map(LocalModelParams(mu=0.5, alpha=2.0 * math.pi / 3.0))

    def test_resonance_check_deferred(self):
        """require_nonresonant=False builds the map at a strong resonance."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=2.0 * math.pi / 3.0), require_nonresonant=False)
        np.testing.assert_allclose(f(np.zeros(4)), np.zeros(4), atol=1e-15)

    def test_zero_twist(self):
        """nu = 0 is rejected when twist is required."""
        with pytest.raises(ZeroTwist):
            build_local_map(LocalModelParams(mu=0.5, alpha=1.0, nu=0.0))

    def test_kappa_constraint(self):
        """kappa is derived as -2b and other values are refused."""
        assert LocalModelParams(mu=0.5, alpha=1.0, b=-0.2).kappa == pytest.approx(0.4)
        with pytest.raises(ValidationError):
            LocalModelParams(mu=0.5, alpha=1.0, b=-0.2, kappa=0.05)

    def test_axis_invariance_bitwise(self):
        """Both axes map into themselves exactly."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1, eps_pert=0.1))
        rng = np.random.default_rng(3)
        s = rng.uniform(-0.9, 0.9, size=10_000)
        zeros = np.zeros_like(s)
        on_x = f(np.stack([s, zeros, zeros, zeros], axis=1))
        on_y = f(np.stack([zeros, s, zeros, zeros], axis=1))
        assert np.all(on_x[:, 1:] == 0.0)
        assert np.all(on_y[:, [0, 2, 3]] == 0.0)

    def test_flat_center_manifolds(self):
        """{y = 0} and {x = 0} are invariant."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1, eps_pert=0.1))
        rng = np.random.default_rng(4)
        q = rng.uniform(-0.4, 0.4, size=(500, 4))
        q_cs = q.copy()
        q_cs[:, 1] = 0.0
        q_cu = q.copy()
        q_cu[:, 0] = 0.0
        assert np.all(f(q_cs)[:, 1] == 0.0)
        assert np.all(f(q_cu)[:, 0] == 0.0)

    def test_closed_form_inverse(self):
        """inverse o f = id for the integrable map."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1))
        rng = np.random.default_rng(5)
        q = rng.uniform(-0.4, 0.4, size=(200, 4))
        np.testing.assert_allclose(f.inverse(f(q)), q, atol=1e-13)

    def test_perturbed_inverse_uses_newton(self):
        """With eps_pert > 0 there is no closed form; Newton from the integrable preimage inverts f."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1, eps_pert=0.1))
        assert f.inverse is None
        assert f.inverse_guess is not None
        rng = np.random.default_rng(5)
        q = rng.uniform(-0.4, 0.4, size=(200, 4))
        np.testing.assert_allclose(invert(f, f(q)), q, atol=1e-12)

    def test_xy_drift_integrable(self):
        """x y is conserved to rounding when eps = 0."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1))
        assert fit_xy_drift(f, np.random.default_rng(6), radius=0.3) < 1e-6


class TestGlobalMap:
    """Affine global map and its certificates."""

    def test_anchor_mapping(self):
        """q- goes to q+."""
        spec = GlobalMapSpec()
        g = build_global_map(spec)
        np.testing.assert_array_equal(g(spec.q_minus), spec.q_plus)

    def test_transversality_determinant(self):
        """Default M has determinant shear * sigma."""
        assert transversality_determinant(default_global_matrix(sigma=1.0, shear=1.0)) == pytest.approx(1.0)
        assert transversality_determinant(default_global_matrix(sigma=2.0, shear=0.5)) == pytest.approx(1.0)

    def test_pure_swap_rejected(self):
        """Without shear the image of {x = 0} is tangent to {y = 0}."""
        with pytest.raises(TransversalityFailure):
            build_global_map(GlobalMapSpec(M=default_global_matrix(shear=0.0)))

    def test_non_symplectic_rejected(self):
        """A non-symplectic M is refused."""
        with pytest.raises(NonSymplecticM):
            build_global_map(GlobalMapSpec(M=np.diag([1.0, 1.0, 2.0, 2.0])))

    def test_round_trip(self):
        """G^-1 o G = id to 1e-14."""
        g = build_global_map(GlobalMapSpec(M=default_global_matrix(sigma=1.3, shear=0.7)))
        q = np.random.default_rng(8).uniform(-1, 1, size=(100, 4))
        np.testing.assert_allclose(g.inverse(g(q)), q, atol=1e-14)

    def test_random_symplectic_matrix(self):
        """The sampler returns symplectic matrices."""
        rng = np.random.default_rng(9)
        for _ in range(10):
            assert symplectic_residual(random_symplectic_matrix(rng)) < 1e-10


class TestGluedModel:
    """Composed first-return dynamics."""

    def setup_method(self):
        self.model = demo_model()

    def test_homoclinic_by_construction(self):
        """q- maps to q+ and f^-1(q-) lies on the y-axis."""
        np.testing.assert_array_equal(self.model.step(self.model.q_minus), self.model.q_plus)
        pre = self.model.step_inverse(self.model.q_minus)
        assert pre[0] == 0.0 and pre[2] == 0.0 and pre[3] == 0.0

    def test_center_orbit_stays_on_center(self):
        """eps = 0: (0, 0, u, v) never leaves the center plane."""
        model = demo_model(eps_pert=0.0)
        q = np.array([0.0, 0.0, 0.1, 0.05])
        for _ in range(100):
            q = model.step(q)
            assert q[0] == 0.0 and q[1] == 0.0

    def test_gluing_overlap(self):
        """q+ inside the ball is rejected."""
        params = LocalModelParams(mu=0.5, alpha=1.0, nu=0.1)
        with pytest.raises(GluingOverlap):
            build_model(params, GlobalMapSpec(x0=0.05, y1=0.05), gluing_radius=0.2)

    def test_straddle_flag(self):
        """Points on the gluing sphere are flagged."""
        q = self.model.q_minus + np.array([self.model.gluing_radius, 0.0, 0.0, 0.0])
        assert self.model.straddles(q)
        assert not self.model.straddles(self.model.q_minus)

    def test_first_return_symplectic(self):
        """The composed Jacobian is symplectic on and off the ball."""
        rng = np.random.default_rng(10)
        pts = np.vstack([rng.uniform(-0.3, 0.3, size=(50, 4)),
                         self.model.q_minus + rng.uniform(-0.05, 0.05, size=(50, 4))])
        assert np.max(symplectic_residual(self.model.step_jacobian(pts))) < 1e-10
