"""Tests for phase points, map plumbing and symplecticity checks."""

import math

import numpy as np
import pytest

from homoclinickit.errors import DomainEscape, InverseDivergence, NonSymplecticJacobian
from homoclinickit.model_zoo import LocalModelParams, build_local_map
from homoclinickit.symplectic_core import (
    DomainBox,
    PhasePoint,
    SmoothMap4,
    TangentVector,
    apply,
    block_diag,
    check_symplectic_block_identities,
    compose,
    identity_map,
    iterate,
    jacobian,
    linear_map,
    newton_inverse,
    numerical_jacobian,
    orbit_array,
    rotation,
    symplectic_residual,
)


class TestPhasePoint:
    """Value types reject non-finite data."""

    def test_roundtrip_array(self):
        """from_array(as_array()) returns an equal point."""
        p = PhasePoint(1.0, 2.0, 3.0, 4.0)
        assert PhasePoint.from_array(p.as_array()) == p

    def test_rejects_nan(self):
        """NaN components are refused."""
        with pytest.raises(ValueError):
            PhasePoint(float("nan"), 0.0, 0.0, 0.0)

    def test_tangent_vector_rejects_inf(self):
        """Inf components are refused for tangent vectors too."""
        with pytest.raises(ValueError):
            TangentVector(0.0, math.inf, 0.0, 0.0)


class TestApplyAndIterate:
    """apply, jacobian and iterate on simple maps."""

    def setup_method(self):
        self.saddle = linear_map(block_diag(np.diag([0.5, 2.0]), rotation(1.0)), name="saddle")

    def test_identity(self):
        """Identity leaves the point alone."""
        assert apply(identity_map(), PhasePoint(1, 2, 3, 4)) == PhasePoint(1, 2, 3, 4)

    def test_linear_block_action(self):
        """diag(0.5, 2) + R_1 on (1, 0, 1, 0)."""
        out = apply(self.saddle, PhasePoint(1, 0, 1, 0))
        assert out.x == pytest.approx(0.5)
        assert out.y == 0.0
        assert out.u == pytest.approx(math.cos(1.0))
        assert out.v == pytest.approx(math.sin(1.0))

    def test_truncated_normal_form(self):
        """Center point (0, 0, 1, 0) rotates by alpha + nu."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, nu=0.1, h=2.0))
        out = apply(f, PhasePoint(0, 0, 1, 0))
        assert (out.x, out.y) == (0.0, 0.0)
        assert out.u == pytest.approx(math.cos(1.1), abs=1e-15)
        assert out.v == pytest.approx(math.sin(1.1), abs=1e-15)

    def test_jacobian_of_linear_map(self):
        """Jacobian of a linear map is the matrix itself."""
        J = jacobian(self.saddle, PhasePoint(0.3, -0.2, 0.1, 0.0))
        np.testing.assert_allclose(J, block_diag(np.diag([0.5, 2.0]), rotation(1.0)))

    def test_iterate_zero_steps(self):
        """n = 0 returns [p]."""
        p = PhasePoint(0.1, 0.2, 0.3, 0.4)
        assert iterate(self.saddle, p, 0) == [p]

    def test_iterate_geometric_decay(self):
        """x halves on the stable axis."""
        xs = [pt.x for pt in iterate(self.saddle, PhasePoint(1, 0, 0, 0), 3)]
        assert xs == [1.0, 0.5, 0.25, 0.125]

    def test_orbit_array_shape(self):
        """orbit_array stacks the same points as rows."""
        arr = orbit_array(self.saddle, PhasePoint(1, 0, 0, 0), -2)
        assert arr.shape == (3, 4)
        np.testing.assert_allclose(arr[:, 0], [1.0, 2.0, 4.0])

    def test_iterate_round_trip(self):
        """Five steps forward and five back return to the start."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1, eps_pert=0.05))
        p = PhasePoint(0.05, 0.02, 0.1, -0.05)
        end = iterate(f, p, 5)[-1]
        back = iterate(f, end, -5)[-1]
        np.testing.assert_allclose(back.as_array(), p.as_array(), atol=1e-9)

    def test_domain_escape(self):
        """Leaving the box raises DomainEscape."""
        f = linear_map(np.diag([0.5, 2.0, 1.0, 1.0]), domain=DomainBox.cube(1.0))
        with pytest.raises(DomainEscape):
            iterate(f, PhasePoint(0.0, 0.9, 0.0, 0.0), 1)

    def test_non_symplectic_jacobian(self):
        """A scaling map is not symplectic."""
        with pytest.raises(NonSymplecticJacobian):
            jacobian(linear_map(2.0 * np.eye(4)), PhasePoint(0, 0, 0, 0))


class TestNewtonInverse:
    """Newton inversion used for maps without a closed-form inverse."""

    def test_matches_closed_form(self):
        """Newton reproduces the closed-form inverse of the integrable map."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1))
        target = np.array([0.1, 0.05, 0.2, -0.1])
        z = newton_inverse(f, target, guess=target)
        np.testing.assert_allclose(z, f.inverse(target), atol=1e-12)

    def test_perturbed_map(self):
        """Newton solves f(z) = target to rounding once polished."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1, eps_pert=0.1))
        target = np.array([0.1, 0.05, 0.2, -0.1])
        z = newton_inverse(f, target)
        np.testing.assert_allclose(f(z), target, atol=1e-14)

    def test_divergence(self):
        """A map without preimages for the target diverges."""
        g = SmoothMap4("exp", lambda q: np.exp(q), lambda q: np.diag(np.exp(q)))
        with pytest.raises(InverseDivergence):
            newton_inverse(g, -np.ones(4), guess=np.zeros(4))

    def test_singular_jacobian(self):
        """A singular Newton matrix is reported as divergence."""
        g = SmoothMap4("flat", lambda q: q * 0.0, lambda q: np.zeros(q.shape + (4,)))
        with pytest.raises(InverseDivergence):
            newton_inverse(g, np.ones(4), guess=np.zeros(4))

    def test_non_finite_jacobian(self):
        """NaN entries in the Jacobian stop the iteration."""
        g = SmoothMap4("nan", lambda q: q.copy(), lambda q: np.full(q.shape + (4,), np.nan))
        with pytest.raises(InverseDivergence):
            newton_inverse(g, np.ones(4), guess=np.zeros(4))


class TestBlockIdentities:
    """Lemma-style block identities of symplectic matrices."""

    def test_identity_matrix(self):
        """All residuals vanish for the identity."""
        rep = check_symplectic_block_identities(np.eye(4))
        assert rep.passed
        assert rep.symmetric_ac == rep.symmetric_bd == rep.unimodular == 0.0

    def test_scaled_identity_fails(self):
        """2*I gives d^T a - b^T c = 4E, residual 3."""
        rep = check_symplectic_block_identities(2.0 * np.eye(4))
        assert rep.unimodular == pytest.approx(3.0)
        assert not rep.passed

    def test_model_jacobians(self):
        """Model Jacobians satisfy the identities on random points."""
        f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1, eps_pert=1e-3))
        rng = np.random.default_rng(7)
        for q in rng.uniform(-0.4, 0.4, size=(200, 4)):
            assert check_symplectic_block_identities(f.jac(q)).passed


class TestModelJacobians:
    """Closed-form Jacobians against symplecticity and finite differences."""

    def setup_method(self):
        self.f = build_local_map(LocalModelParams(mu=0.5, alpha=1.0, a=0.3, b=-0.2, nu=0.1, eps_pert=0.05))
        self.rng = np.random.default_rng(11)

    def test_symplectic_on_random_points(self):
        """Residual <= 1e-10 and det = 1 on 1000 points."""
        q = self.rng.uniform(-0.5, 0.5, size=(1000, 4))
        J = self.f.jac(q)
        assert np.max(symplectic_residual(J)) <= 1e-10
        assert np.max(np.abs(np.linalg.det(J) - 1.0)) <= 1e-10

    def test_finite_difference_agreement(self):
        """Closed form matches central differences within 1e-6."""
        for q in self.rng.uniform(-0.5, 0.5, size=(100, 4)):
            np.testing.assert_allclose(self.f.jac(q), numerical_jacobian(self.f, q), atol=1e-6)

    def test_composition_consistency(self):
        """D(f o f)(p) = Df(f p) Df(p)."""
        ff = compose(self.f, self.f)
        for q in self.rng.uniform(-0.3, 0.3, size=(20, 4)):
            np.testing.assert_allclose(ff.jac(q), self.f.jac(self.f(q)) @ self.f.jac(q), atol=1e-10)

    def test_jacobian_at_origin(self):
        """Df(0) = blockdiag(diag(mu, 1/mu), R_alpha)."""
        np.testing.assert_allclose(self.f.jac(np.zeros(4)),
                                   block_diag(np.diag([0.5, 2.0]), rotation(1.0)), atol=1e-15)
