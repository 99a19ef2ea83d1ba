"""Phase points, smooth maps of R^4 and symplecticity checks.

Ordering is (x, y, u, v) everywhere, with Omega = dx^dy + du^dv. All map rules
are vectorized over a leading batch shape: ``evaluate`` takes ``(..., 4)`` and
``jacobian_rule`` returns ``(..., 4, 4)``.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union
import logging
import math

import numpy as np

from .errors import DomainEscape, InverseDivergence, NonSymplecticJacobian

logger = logging.getLogger("homoclinickit.symplectic_core")

DEFAULT_TOL_SYMP = 1e-9

# Structure matrix of Omega = dx^dy + du^dv.
STRUCTURE = np.array(
    [[0.0, 1.0, 0.0, 0.0],
     [-1.0, 0.0, 0.0, 0.0],
     [0.0, 0.0, 0.0, 1.0],
     [0.0, 0.0, -1.0, 0.0]]
)

# (x, y, u, v) -> (x, u | y, v): positions first, momenta second.
CANONICAL_ORDER = [0, 2, 1, 3]

Jacobian4 = np.ndarray
ArrayLike = Union[np.ndarray, "PhasePoint", list, tuple]


@dataclass(frozen=True)
class PhasePoint:
    """A point (x, y, u, v) of the phase space."""
    x: float
    y: float
    u: float
    v: float

    def __post_init__(self):
        for name in ("x", "y", "u", "v"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"PhasePoint.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.u, self.v])

    @classmethod
    def from_array(cls, arr) -> "PhasePoint":
        a = np.asarray(arr, dtype=float).reshape(4)
        return cls(a[0], a[1], a[2], a[3])


@dataclass(frozen=True)
class TangentVector:
    """Components (xi, eta, chi1, chi2) of a tangent vector."""
    xi: float
    eta: float
    chi1: float
    chi2: float

    def __post_init__(self):
        for name in ("xi", "eta", "chi1", "chi2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"TangentVector.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.xi, self.eta, self.chi1, self.chi2])

    @classmethod
    def from_array(cls, arr) -> "TangentVector":
        a = np.asarray(arr, dtype=float).reshape(4)
        return cls(a[0], a[1], a[2], a[3])


@dataclass(frozen=True, eq=False)
class DomainBox:
    """Axis-aligned box ``lower <= q <= upper``."""
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def cube(cls, half_width: float, center=None) -> "DomainBox":
        c = np.zeros(4) if center is None else np.asarray(center, dtype=float)
        return cls(c - half_width, c + half_width)

    @classmethod
    def unbounded(cls) -> "DomainBox":
        return cls(np.full(4, -np.inf), np.full(4, np.inf))

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        q = np.asarray(points, dtype=float)
        inside = np.all((q >= self.lower - margin) & (q <= self.upper + margin), axis=-1)
        return inside & np.all(np.isfinite(q), axis=-1)


@dataclass(frozen=True, eq=False)
class SmoothMap4:
    """A smooth map of R^4 with a closed-form Jacobian.

    ``inverse`` is an exact inverse when one is known; otherwise
    ``inverse_guess`` (if given) seeds Newton inversion.
    """
    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    jacobian_rule: Callable[[np.ndarray], np.ndarray]
    domain: DomainBox = field(default_factory=DomainBox.unbounded)
    margin: float = 1e-9
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse_guess: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, q) -> np.ndarray:
        return self.evaluate(np.asarray(q, dtype=float))

    def jac(self, q) -> np.ndarray:
        return self.jacobian_rule(np.asarray(q, dtype=float))


def _as_array(p: ArrayLike) -> np.ndarray:
    if isinstance(p, PhasePoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def rotation(angle) -> np.ndarray:
    """Rotation matrix R_angle; vectorized over ``angle``."""
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


def symplectic_residual(J) -> Union[float, np.ndarray]:
    """Return ||J^T S J - S||_inf (max-abs entry) for one matrix or a stack."""
    J = np.asarray(J, dtype=float)
    r = np.swapaxes(J, -1, -2) @ STRUCTURE @ J - STRUCTURE
    out = np.max(np.abs(r), axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def _check_domain(fmap: SmoothMap4, q: np.ndarray, what: str) -> None:
    if not np.all(fmap.domain.contains(q, fmap.margin)):
        raise DomainEscape(f"{what} outside the domain of {fmap.name}: {np.asarray(q).tolist()}")


def apply(fmap: SmoothMap4, p: ArrayLike) -> PhasePoint:
    """Evaluate ``fmap`` at ``p`` with domain checks on input and image."""
    q = _as_array(p)
    _check_domain(fmap, q, "point")
    image = fmap(q)
    _check_domain(fmap, image, "image")
    return PhasePoint.from_array(image)


def jacobian(fmap: SmoothMap4, p: ArrayLike, tol_symp: float = DEFAULT_TOL_SYMP) -> Jacobian4:
    """Closed-form Jacobian at ``p``, certified symplectic within ``tol_symp``."""
    q = _as_array(p)
    _check_domain(fmap, q, "point")
    J = np.asarray(fmap.jac(q), dtype=float)
    res = symplectic_residual(J)
    if res > tol_symp:
        raise NonSymplecticJacobian(f"{fmap.name}: symplectic residual {res:.3e} > {tol_symp:.1e}")
    return J


def newton_inverse(fmap: SmoothMap4, target, guess=None, tol: float = 1e-12,
                   max_iter: int = 50) -> np.ndarray:
    """Solve ``fmap(z) = target`` for z; vectorized over the batch shape."""
    target = np.asarray(target, dtype=float)
    if guess is None:
        guess = fmap.inverse_guess(target) if fmap.inverse_guess is not None else target
    z = np.array(guess, dtype=float, copy=True)
    scale = 1.0 + np.max(np.abs(target))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(max_iter):
            r = fmap(z) - target
            err = float(np.max(np.abs(r))) if r.size else 0.0
            if not math.isfinite(err):
                break
            J = fmap.jac(z) if err > 0.0 else None
            if J is not None and not np.all(np.isfinite(J)):
                J = None
            try:
                step = None if J is None else np.linalg.solve(J, r[..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = None
            if err <= tol * scale:
                # one polishing step, kept only if it does not raise the residual
                if step is not None:
                    z1 = z - step
                    if np.max(np.abs(fmap(z1) - target)) <= err:
                        return z1
                return z
            if step is None:
                break
            z = z - step
    raise InverseDivergence(f"{fmap.name}: Newton inversion did not converge in {max_iter} steps")


def invert(fmap: SmoothMap4, q) -> np.ndarray:
    """Preimage of ``q``: closed form when available, Newton otherwise."""
    q = np.asarray(q, dtype=float)
    if fmap.inverse is not None:
        return fmap.inverse(q)
    return newton_inverse(fmap, q)


def iterate(fmap: SmoothMap4, p: ArrayLike, n: int) -> List[PhasePoint]:
    """Orbit segment [p, f(p), ..., f^n(p)]; negative ``n`` walks backwards."""
    q = _as_array(p)
    _check_domain(fmap, q, "point")
    out = [PhasePoint.from_array(q)]
    step = fmap.evaluate if n >= 0 else (lambda z: invert(fmap, z))
    for _ in range(abs(int(n))):
        q = step(q)
        _check_domain(fmap, q, "iterate")
        out.append(PhasePoint.from_array(q))
    return out


def orbit_array(fmap: SmoothMap4, p: ArrayLike, n: int) -> np.ndarray:
    """Like :func:`iterate` but returns an ``(|n|+1, 4)`` array."""
    return np.array([pt.as_array() for pt in iterate(fmap, p, n)])


@dataclass
class BlockIdentityReport:
    """Residuals of a^T c = c^T a, b^T d = d^T b and d^T a - b^T c = E."""
    symmetric_ac: float
    symmetric_bd: float
    unimodular: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.symmetric_ac, self.symmetric_bd, self.unimodular) <= self.tol


def canonical_blocks(J):
    """Split J into 2x2 blocks (a, b, c, d) in the (x, u | y, v) ordering."""
    P = np.asarray(J, dtype=float)[np.ix_(CANONICAL_ORDER, CANONICAL_ORDER)]
    return P[:2, :2], P[:2, 2:], P[2:, :2], P[2:, 2:]


def check_symplectic_block_identities(J, tol: float = 1e-10) -> BlockIdentityReport:
    """Evaluate the block identities of a symplectic 4x4 matrix.

    Blocks are taken with positions (x, u) before momenta (y, v), where the
    three identities are equivalent to symplecticity.
    """
    a, b, c, d = canonical_blocks(J)
    r1 = np.max(np.abs(a.T @ c - c.T @ a))
    r2 = np.max(np.abs(b.T @ d - d.T @ b))
    r3 = np.max(np.abs(d.T @ a - b.T @ c - np.eye(2)))
    return BlockIdentityReport(float(r1), float(r2), float(r3), tol)


def numerical_jacobian(fmap: SmoothMap4, p: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian (test oracle)."""
    q = _as_array(p)
    cols = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        cols.append((fmap(q + e) - fmap(q - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def compose(f: SmoothMap4, g: SmoothMap4, name: Optional[str] = None) -> SmoothMap4:
    """The map f o g with chain-rule Jacobian."""

    def evaluate(q):
        return f.evaluate(g.evaluate(q))

    def jac(q):
        return f.jacobian_rule(g.evaluate(q)) @ g.jacobian_rule(q)

    inverse = None
    if f.inverse is not None and g.inverse is not None:
        def inverse(q):
            return g.inverse(f.inverse(q))

    return SmoothMap4(name or f"{f.name}*{g.name}", evaluate, jac, g.domain, g.margin, inverse)


def conjugate(f: SmoothMap4, phi: SmoothMap4, phi_inv: SmoothMap4) -> SmoothMap4:
    """phi^-1 o f o phi."""
    return compose(phi_inv, compose(f, phi), name=f"conj({f.name})")


def linear_map(M, name: str = "linear", domain: Optional[DomainBox] = None) -> SmoothMap4:
    """Linear map q -> M q with exact inverse."""
    M = np.array(M, dtype=float)
    Minv = np.linalg.inv(M)

    return SmoothMap4(
        name=name,
        evaluate=lambda q: q @ M.T,
        jacobian_rule=lambda q: np.broadcast_to(M, np.shape(q)[:-1] + (4, 4)).copy(),
        domain=domain or DomainBox.unbounded(),
        inverse=lambda q: q @ Minv.T,
    )


def identity_map(domain: Optional[DomainBox] = None) -> SmoothMap4:
    return linear_map(np.eye(4), name="identity", domain=domain)


def block_diag(hyperbolic, center) -> np.ndarray:
    """blockdiag(hyperbolic, center) for two 2x2 blocks."""
    M = np.zeros((4, 4))
    M[:2, :2] = hyperbolic
    M[2:, 2:] = center
    return M
