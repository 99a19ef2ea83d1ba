"""Glued model maps: a local normal-form map near the fixed point and an
affine symplectic global map that closes the homoclinic loop.

The local map is an exact composition of symplectic pieces

    f = K o L o E o X

E   time-one flow of G = a w^2/2 + b w rho - (nu/4) rho^2, with w = xy and
    rho = u^2 + v^2; it twists the center by nu*rho + kappa*w and scales the
    saddle by exp(a w + b rho). Symplectic only for kappa = -2b.
L   linear part blockdiag(diag(mu, 1/mu), R_alpha).
X   time-one flow of eps * x^2 y^2 u (order 5, zero on both axes).
K   center kick v -> v - eps u^4 (order 4, zero on both axes).

Every piece keeps {x = 0}, {y = 0} and both axes invariant and has a closed
form inverse.
"""

from dataclasses import dataclass, field
from typing import Optional
import logging
import math

import numpy as np
from scipy.linalg import expm

from .errors import (
    GluingOverlap,
    NonSymplecticM,
    StrongResonance,
    TransversalityFailure,
    ValidationError,
    ZeroTwist,
)
from .symplectic_core import (
    DEFAULT_TOL_SYMP,
    STRUCTURE,
    DomainBox,
    SmoothMap4,
    block_diag,
    invert,
    rotation,
    symplectic_residual,
)

logger = logging.getLogger("homoclinickit.model_zoo")

STRONG_RESONANCES = (math.pi / 2.0, 2.0 * math.pi / 3.0)


def near_strong_resonance(alpha: float, tol_res: float) -> Optional[float]:
    """Return the strong resonance within ``tol_res`` of ``alpha``, if any."""
    for target in STRONG_RESONANCES:
        if abs(alpha - target) <= tol_res:
            return target
    return None


@dataclass(frozen=True)
class LocalModelParams:
    """Parameters of the local normal-form map.

    ``kappa`` defaults to ``-2*b``, the only value for which the twist flow is
    symplectic; an explicit value must agree with it.
    """
    mu: float
    alpha: float
    a: float = 0.0
    b: float = 0.0
    nu: float = 0.1
    kappa: Optional[float] = None
    eps_pert: float = 0.0
    h: float = 1.0
    tol_res: float = 1e-3
    tol_symp: float = DEFAULT_TOL_SYMP

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0):
            raise ValidationError(f"mu must lie in (0, 1), got {self.mu}")
        if not (0.0 < self.alpha < math.pi):
            raise ValidationError(f"alpha must lie in (0, pi), got {self.alpha}")
        if self.eps_pert < 0.0:
            raise ValidationError("eps_pert must be non-negative")
        if self.h <= 0.0:
            raise ValidationError("domain half-width h must be positive")
        if self.kappa is None:
            object.__setattr__(self, "kappa", -2.0 * self.b)
        elif abs(self.kappa + 2.0 * self.b) > self.tol_symp:
            raise ValidationError(
                f"kappa = {self.kappa} breaks symplecticity; the twist flow requires kappa = -2b = {-2.0 * self.b}"
            )


# -- pieces of the local map ---------------------------------------------

def _unpack(q):
    return q[..., 0], q[..., 1], q[..., 2], q[..., 3]


def _x_flow(q, eps):
    x, y, u, v = _unpack(q)
    w = x * y
    s = 2.0 * eps * w * u
    return np.stack([x * np.exp(s), y * np.exp(-s), u, v - eps * w * w], axis=-1)


def _x_flow_jac(q, eps):
    x, y, u, v = _unpack(q)
    w = x * y
    s = 2.0 * eps * w * u
    es, ems = np.exp(s), np.exp(-s)
    J = np.zeros(np.shape(q)[:-1] + (4, 4))
    J[..., 0, 0] = es * (1.0 + s)
    J[..., 0, 1] = es * 2.0 * eps * x * x * u
    J[..., 0, 2] = es * 2.0 * eps * x * w
    J[..., 1, 0] = -ems * 2.0 * eps * y * y * u
    J[..., 1, 1] = ems * (1.0 - s)
    J[..., 1, 2] = -ems * 2.0 * eps * y * w
    J[..., 2, 2] = 1.0
    J[..., 3, 0] = -2.0 * eps * w * y
    J[..., 3, 1] = -2.0 * eps * w * x
    J[..., 3, 3] = 1.0
    return J


def _twist_data(q, p: LocalModelParams):
    x, y, u, v = _unpack(q)
    w = x * y
    rho = u * u + v * v
    return x, y, u, v, p.a * w + p.b * rho, p.nu * rho + p.kappa * w


def _twist_linear(q, p: LocalModelParams):
    """L o E."""
    x, y, u, v, A, theta = _twist_data(q, p)
    R = rotation(p.alpha + theta)
    uv = np.stack([u, v], axis=-1)
    uv1 = (R @ uv[..., None])[..., 0]
    return np.stack([p.mu * x * np.exp(A), y * np.exp(-A) / p.mu, uv1[..., 0], uv1[..., 1]], axis=-1)


def _twist_linear_inv(q, p: LocalModelParams):
    x1, y1, u1, v1 = _unpack(q)
    x, y = x1 / p.mu, y1 * p.mu
    uv = (rotation(-p.alpha) @ np.stack([u1, v1], axis=-1)[..., None])[..., 0]
    # w and rho are invariants of the twist flow
    z = np.stack([x, y, uv[..., 0], uv[..., 1]], axis=-1)
    _, _, u, v, A, theta = _twist_data(z, p)
    uv0 = (rotation(-theta) @ np.stack([u, v], axis=-1)[..., None])[..., 0]
    return np.stack([x * np.exp(-A), y * np.exp(A), uv0[..., 0], uv0[..., 1]], axis=-1)


def _twist_linear_jac(q, p: LocalModelParams):
    x, y, u, v, A, theta = _twist_data(q, p)
    eA, emA = np.exp(A), np.exp(-A)
    J = np.zeros(np.shape(q)[:-1] + (4, 4))
    mu = p.mu
    J[..., 0, 0] = mu * eA * (1.0 + p.a * x * y)
    J[..., 0, 1] = mu * eA * p.a * x * x
    J[..., 0, 2] = mu * eA * x * 2.0 * p.b * u
    J[..., 0, 3] = mu * eA * x * 2.0 * p.b * v
    J[..., 1, 0] = -emA * p.a * y * y / mu
    J[..., 1, 1] = emA * (1.0 - p.a * x * y) / mu
    J[..., 1, 2] = -emA * y * 2.0 * p.b * u / mu
    J[..., 1, 3] = -emA * y * 2.0 * p.b * v / mu
    R = rotation(p.alpha + theta)
    # derivative of R_theta (u, v) along theta is R_theta (-v, u)
    perp = (R @ np.stack([-v, u], axis=-1)[..., None])[..., 0]
    grad = np.stack([p.kappa * y, p.kappa * x, 2.0 * p.nu * u, 2.0 * p.nu * v], axis=-1)
    J[..., 2:, :] = perp[..., :, None] * grad[..., None, :]
    J[..., 2:, 2:] += R
    return J


def _kick(q, eps):
    x, y, u, v = _unpack(q)
    return np.stack([x, y, u, v - eps * u ** 4], axis=-1)


def _kick_jac(q, eps):
    J = np.zeros(np.shape(q)[:-1] + (4, 4))
    J[..., 0, 0] = J[..., 1, 1] = J[..., 2, 2] = J[..., 3, 3] = 1.0
    J[..., 3, 2] = -4.0 * eps * q[..., 2] ** 3
    return J


def build_local_map(params: LocalModelParams, require_twist: bool = True,
                    require_nonresonant: bool = True) -> SmoothMap4:
    """Local map in normal-form coordinates with a closed-form Jacobian.

    The inverse is closed form for eps_pert = 0; otherwise ``invert`` runs
    Newton seeded by the inverse of the integrable part.

    ``require_twist=False`` admits nu = 0 (used for linear reference maps);
    ``require_nonresonant=False`` defers the strong-resonance check to the
    spectrum classification.
    """
    hit = near_strong_resonance(params.alpha, params.tol_res)
    if require_nonresonant and hit is not None:
        raise StrongResonance(f"alpha = {params.alpha} within {params.tol_res} of {hit}")
    if require_twist and params.nu == 0.0:
        raise ZeroTwist("twist coefficient nu must be non-zero")
    eps = params.eps_pert

    def evaluate(q):
        return _kick(_twist_linear(_x_flow(q, eps), params), eps)

    def jac(q):
        q1 = _x_flow(q, eps)
        q2 = _twist_linear(q1, params)
        return _kick_jac(q2, eps) @ _twist_linear_jac(q1, params) @ _x_flow_jac(q, eps)

    def integrable_inverse(q):
        return _twist_linear_inv(q, params)

    inverse = integrable_inverse if eps == 0.0 else None

    name = f"local(mu={params.mu:g}, alpha={params.alpha:g}, nu={params.nu:g}, eps={eps:g})"
    logger.debug("build_local_map", extra={"mu": params.mu, "alpha": params.alpha, "eps_pert": eps})
    return SmoothMap4(name, evaluate, jac, DomainBox.cube(params.h), 1e-9, inverse, integrable_inverse)


# -- global map -----------------------------------------------------------

def hyperbolic_block(sigma: float = 1.0, shear: float = 1.0) -> np.ndarray:
    """[[1, 0], [shear, 1]] times the swap [[0, sigma], [-1/sigma, 0]]."""
    return np.array([[0.0, sigma], [-1.0 / sigma, shear * sigma]])


def default_global_matrix(sigma: float = 1.0, shear: float = 1.0, B=None) -> np.ndarray:
    if B is None:
        B = np.diag([1.5, 1.0 / 1.5])
    return block_diag(hyperbolic_block(sigma, shear), np.asarray(B, dtype=float))


def transversality_determinant(M) -> float:
    """det[e_x | M e_y | M e_u | M e_v]."""
    M = np.asarray(M, dtype=float)
    cols = np.column_stack([np.array([1.0, 0.0, 0.0, 0.0]), M[:, 1], M[:, 2], M[:, 3]])
    return float(np.linalg.det(cols))


def symplectic_inverse(M) -> np.ndarray:
    """Inverse of a symplectic matrix, -S M^T S."""
    return -STRUCTURE @ np.asarray(M, dtype=float).T @ STRUCTURE


@dataclass(frozen=True, eq=False)
class GlobalMapSpec:
    """Affine global map q -> q+ + M (q - q-) with q- = (0, y1, 0, 0), q+ = (x0, 0, 0, 0)."""
    x0: float = 0.5
    y1: float = 0.5
    M: np.ndarray = field(default_factory=default_global_matrix)
    tol_symp: float = DEFAULT_TOL_SYMP
    tol_trans: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "M", np.array(self.M, dtype=float).reshape(4, 4))
        if self.x0 <= 0.0 or self.y1 <= 0.0:
            raise ValidationError("anchors x0 and y1 must be positive")

    @property
    def q_minus(self) -> np.ndarray:
        return np.array([0.0, self.y1, 0.0, 0.0])

    @property
    def q_plus(self) -> np.ndarray:
        return np.array([self.x0, 0.0, 0.0, 0.0])


def build_global_map(spec: GlobalMapSpec) -> SmoothMap4:
    """Affine symplectic map sending q- to q+; certified symplectic and transverse."""
    M = spec.M
    res = symplectic_residual(M)
    if res > spec.tol_symp:
        raise NonSymplecticM(f"global matrix symplectic residual {res:.3e}")
    det = transversality_determinant(M)
    if abs(det) <= spec.tol_trans:
        raise TransversalityFailure(f"transversality determinant {det:.3e} vanishes")
    Minv = symplectic_inverse(M)
    qm, qp = spec.q_minus, spec.q_plus

    def evaluate(q):
        return qp + (q - qm) @ M.T

    def jac(q):
        return np.broadcast_to(M, np.shape(q)[:-1] + (4, 4)).copy()

    def inverse(q):
        return qm + (q - qp) @ Minv.T

    return SmoothMap4("global", evaluate, jac, DomainBox.unbounded(), 1e-9, inverse)


# -- composed model ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MapModel:
    """Local map glued to the global map on a ball around q-."""
    params: LocalModelParams
    spec: GlobalMapSpec
    gluing_radius: float
    local: SmoothMap4
    global_map: SmoothMap4
    moser_eps: float = 0.1

    @property
    def q_minus(self) -> np.ndarray:
        return self.spec.q_minus

    @property
    def q_plus(self) -> np.ndarray:
        return self.spec.q_plus

    @property
    def mu(self) -> float:
        return self.params.mu

    @property
    def alpha(self) -> float:
        return self.params.alpha

    def in_gluing_ball(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.linalg.norm(q - self.q_minus, axis=-1) <= self.gluing_radius

    def straddles(self, q, tol: float = 1e-9) -> np.ndarray:
        """Points within ``tol`` of the gluing sphere."""
        q = np.asarray(q, dtype=float)
        return np.abs(np.linalg.norm(q - self.q_minus, axis=-1) - self.gluing_radius) <= tol

    def step(self, q) -> np.ndarray:
        """First-return dynamics: global map inside the gluing ball, local map outside."""
        q = np.asarray(q, dtype=float)
        inside = self.in_gluing_ball(q)
        if np.ndim(inside) == 0:
            return self.global_map(q) if inside else self.local(q)
        return np.where(inside[..., None], self.global_map(q), self.local(q))

    def step_jacobian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        inside = self.in_gluing_ball(q)
        if np.ndim(inside) == 0:
            return self.global_map.jac(q) if inside else self.local.jac(q)
        return np.where(inside[..., None, None], self.global_map.jac(q), self.local.jac(q))

    def step_inverse(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        pre_global = self.global_map.inverse(q)
        use_global = self.in_gluing_ball(pre_global)
        if np.ndim(use_global) == 0:
            return pre_global if use_global else invert(self.local, q)
        return np.where(use_global[..., None], pre_global, invert(self.local, q))

    @property
    def first_return(self) -> SmoothMap4:
        return SmoothMap4("first-return", self.step, self.step_jacobian, self.local.domain,
                          self.local.margin, self.step_inverse)


def build_model(params: LocalModelParams, spec: GlobalMapSpec, gluing_radius: float = 0.1,
                moser_eps: float = 0.1, require_nonresonant: bool = True) -> MapModel:
    """Glue the local and global maps into one first-return model."""
    local = build_local_map(params, require_nonresonant=require_nonresonant)
    global_map = build_global_map(spec)
    if gluing_radius <= 0.0:
        raise ValidationError("gluing_radius must be positive")
    box = local.domain
    qm, qp = spec.q_minus, spec.q_plus
    if not (box.contains(qm - gluing_radius) and box.contains(qm + gluing_radius)):
        raise ValidationError("gluing ball around q- must lie inside the local domain")
    if not box.contains(qp):
        raise ValidationError("q+ must lie inside the local domain")
    if np.linalg.norm(qp - qm) <= gluing_radius:
        raise GluingOverlap(f"q+ lies inside the gluing ball of radius {gluing_radius}")
    if np.linalg.norm(invert(local, qm) - qm) <= gluing_radius:
        raise GluingOverlap("f^-1(q-) lies inside the gluing ball; shrink gluing_radius")
    logger.info("model_built", extra={"x0": spec.x0, "y1": spec.y1, "gluing_radius": gluing_radius})
    return MapModel(params, spec, gluing_radius, local, global_map, moser_eps)


def demo_model(eps_pert: float = 1e-3, B=None, **overrides) -> MapModel:
    """The default demo model (mu=0.5, alpha=1, nu=0.1)."""
    local_kw = {k: overrides.pop(k) for k in list(overrides)
                if k in LocalModelParams.__dataclass_fields__}
    params = LocalModelParams(**{"mu": 0.5, "alpha": 1.0, "nu": 0.1, "eps_pert": eps_pert, **local_kw})
    sigma = overrides.pop("sigma", 1.0)
    shear = overrides.pop("shear", 1.0)
    gluing_radius = overrides.pop("gluing_radius", 0.1)
    moser_eps = overrides.pop("moser_eps", 0.1)
    spec = GlobalMapSpec(M=default_global_matrix(sigma, shear, B), **overrides)
    return build_model(params, spec, gluing_radius, moser_eps)


def random_symplectic_matrix(rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """exp(S H) with H a random symmetric matrix; symplectic to rounding."""
    H = rng.normal(scale=scale, size=(4, 4))
    H = 0.5 * (H + H.T)
    return expm(STRUCTURE @ H)


def fit_xy_drift(fmap: SmoothMap4, rng: np.random.Generator, n: int = 1000,
                 radius: float = 0.2) -> float:
    """Fitted constant c in |x1 y1 - x y| <= c ||q||^5 over random points."""
    q = rng.uniform(-radius, radius, size=(n, 4))
    q1 = fmap(q)
    drift = np.abs(q1[:, 0] * q1[:, 1] - q[:, 0] * q[:, 1])
    norms = np.linalg.norm(q, axis=1) ** 5
    return float(np.max(drift / norms))
