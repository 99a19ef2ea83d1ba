"""Fixed point, spectrum and third-order normal form of a 1-elliptic point.

The normal form is computed in diagonal complex coordinates (x, y, z, zbar)
with z = u + i v. Order-2 terms are removed by the homological equation and the
resonant cubic coefficients are read off:

    x-row:  mu x (1 + a xy + b |z|^2)
    z-row:  e^{i alpha} z (1 + i nu |z|^2 + i kappa xy)
"""

from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product
from typing import Callable, List, Optional, Tuple
import logging
import math

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    BadCurveData,
    IllConditionedHomological,
    NewtonDivergence,
    NotOneElliptic,
    StrongResonance,
)
from .model_zoo import near_strong_resonance
from .symplectic_core import (
    DEFAULT_TOL_SYMP,
    STRUCTURE,
    DomainBox,
    SmoothMap4,
    block_diag,
    rotation,
    symplectic_residual,
)

logger = logging.getLogger("homoclinickit.fixed_point_analysis")

COMPONENTS = ("x", "y", "z", "zbar")


# -- fixed point ----------------------------------------------------------

def find_fixed_point(fmap: SmoothMap4, guess, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Newton on f(p) - p = 0."""
    p = np.array(guess, dtype=float).reshape(4)
    for it in range(max_iter):
        if not np.all(np.isfinite(p)) or not fmap.domain.contains(p, fmap.margin):
            break
        r = fmap(p) - p
        if not np.all(np.isfinite(r)):
            break
        if np.max(np.abs(r)) <= tol:
            logger.debug("fixed_point_converged", extra={"iterations": it})
            return p
        try:
            p = p - np.linalg.solve(fmap.jac(p) - np.eye(4), r)
        except np.linalg.LinAlgError:
            break
    raise NewtonDivergence(f"fixed point Newton failed from guess {np.asarray(guess).tolist()}")


# -- spectrum -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Spectrum1Elliptic:
    """Multipliers (orientation*mu, orientation/mu, e^{+-i alpha}) with a symplectic basis.

    ``basis`` conjugates the Jacobian to :attr:`normal_block`. ``krein`` is -1
    when the center block in a symplectic basis is R_{-alpha}.
    """
    mu: float
    alpha: float
    orientation: int
    basis: np.ndarray
    krein: int = 1
    eigenvalues: Tuple[complex, ...] = ()

    @property
    def normal_block(self) -> np.ndarray:
        s = float(self.orientation)
        return block_diag(np.diag([s * self.mu, s / self.mu]), rotation(self.krein * self.alpha))


def _omega(a, b) -> float:
    return float(a @ STRUCTURE @ b)


def classify_spectrum(J, tol_eig: float = 1e-8, tol_res: float = 1e-3,
                      tol_symp: float = DEFAULT_TOL_SYMP) -> Spectrum1Elliptic:
    """Classify a symplectic Jacobian as 1-elliptic and build its normalizing basis."""
    J = np.asarray(J, dtype=float)
    lam, vec = np.linalg.eig(J)
    on_circle = np.abs(np.abs(lam) - 1.0) <= max(tol_eig, 1e-6)
    real = np.abs(lam.imag) <= tol_eig
    hyp = np.where(real & ~on_circle)[0]
    ell = np.where(on_circle & ~real)[0]
    if len(hyp) != 2 or len(ell) != 2:
        raise NotOneElliptic(f"multipliers {np.round(lam, 12).tolist()} are not of saddle-center type")
    i_s, i_u = sorted(hyp, key=lambda k: abs(lam[k]))
    i_c = ell[0] if lam[ell[0]].imag > 0 else ell[1]
    mu = float(abs(lam[i_s].real))
    orientation = 1 if lam[i_s].real > 0 else -1
    alpha = float(np.angle(lam[i_c]))
    if abs(mu * abs(lam[i_u].real) - 1.0) > tol_eig:
        raise NotOneElliptic("real multipliers are not reciprocal")
    hit = near_strong_resonance(alpha, tol_res)
    if hit is not None:
        raise StrongResonance(f"alpha = {alpha} within {tol_res} of {hit}")

    e_s = np.real(vec[:, i_s])
    e_u = np.real(vec[:, i_u])
    e_u = e_u / _omega(e_s, e_u)
    w = vec[:, i_c]
    p, q = np.real(w), -np.imag(w)
    krein = 1
    s = _omega(p, q)
    if s < 0.0:
        krein, q, s = -1, -q, -s
    p, q = p / math.sqrt(s), q / math.sqrt(s)
    B = np.column_stack([e_s, e_u, p, q])

    spec = Spectrum1Elliptic(mu, alpha, orientation, B, krein, tuple(complex(z) for z in lam))
    scale = 1.0 + np.max(np.abs(J))
    if symplectic_residual(B) > tol_symp * (1.0 + np.max(np.abs(B)) ** 2):
        raise NotOneElliptic("could not build a symplectic normalizing basis")
    if np.max(np.abs(np.linalg.solve(B, J @ B) - spec.normal_block)) > tol_eig * scale:
        raise NotOneElliptic("basis does not block-diagonalize the Jacobian")
    logger.debug("spectrum_classified", extra={"mu": mu, "alpha": alpha, "krein": krein})
    return spec


# -- curve straightening ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class CurveData:
    """Curve x -> (x, y(x), u(x), v(x)) through the origin with derivatives."""
    y: Callable
    u: Callable
    v: Callable
    dy: Callable
    du: Callable
    dv: Callable
    d2u: Callable
    d2v: Callable

    @classmethod
    def from_samples(cls, xs, ys, us, vs) -> "CurveData":
        """Cubic-spline curve through sampled points."""
        sy, su, sv = CubicSpline(xs, ys), CubicSpline(xs, us), CubicSpline(xs, vs)
        return cls(sy, su, sv, sy.derivative(), su.derivative(), sv.derivative(),
                   su.derivative(2), sv.derivative(2))

    @classmethod
    def flat(cls) -> "CurveData":
        zero = np.zeros_like
        return cls(zero, zero, zero, zero, zero, zero, zero, zero)


def straighten_invariant_curve(curve: CurveData, tol: float = 1e-8) -> SmoothMap4:
    """Symplectic change of coordinates sending the curve onto the xi-axis.

        xi = x
        eta = y - y(x) - v'(x) (u - u(x)) + u'(x) (v - v(x))
        nu = u - u(x),  omega = v - v(x)
    """
    zero = np.zeros(1)
    at0 = [float(np.asarray(g(zero))[0]) for g in (curve.y, curve.u, curve.v, curve.dy, curve.du, curve.dv)]
    if max(abs(c) for c in at0) > tol:
        raise BadCurveData(f"curve must pass through 0 tangent to the x-axis, got {at0}")

    def evaluate(q):
        x, y, u, v = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
        du, dv = u - curve.u(x), v - curve.v(x)
        eta = y - curve.y(x) - curve.dv(x) * du + curve.du(x) * dv
        return np.stack([x, eta, du, dv], axis=-1)

    def jac(q):
        x, u, v = q[..., 0], q[..., 2], q[..., 3]
        U1, V1 = curve.du(x), curve.dv(x)
        J = np.zeros(np.shape(q)[:-1] + (4, 4))
        J[..., 0, 0] = 1.0
        J[..., 1, 0] = -curve.dy(x) - curve.d2v(x) * (u - curve.u(x)) + curve.d2u(x) * (v - curve.v(x))
        J[..., 1, 1] = 1.0
        J[..., 1, 2] = -V1
        J[..., 1, 3] = U1
        J[..., 2, 0] = -U1
        J[..., 2, 2] = 1.0
        J[..., 3, 0] = -V1
        J[..., 3, 3] = 1.0
        return J

    def inverse(q):
        xi, eta, n, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
        y = eta + curve.y(xi) + curve.dv(xi) * n - curve.du(xi) * w
        return np.stack([xi, y, n + curve.u(xi), w + curve.v(xi)], axis=-1)

    return SmoothMap4("straighten", evaluate, jac, DomainBox.unbounded(), 1e-9, inverse)


# -- resonances -----------------------------------------------------------

_SHIFT = {"x": (1, 0), "y": (-1, 0), "z": (0, 1), "zbar": (0, -1)}
_CONJ = {"x": "y", "y": "x", "z": "zbar", "zbar": "z"}


@dataclass(frozen=True)
class ResonanceEntry:
    """Monomial x^m1 y^m2 z^n1 zbar^n2 resonant in the given component."""
    component: str
    exponents: Tuple[int, int, int, int]
    strong: bool
    real_names: Tuple[str, ...]

    @property
    def order(self) -> int:
        return sum(self.exponents)

    def conjugate(self) -> "ResonanceEntry":
        m1, m2, n1, n2 = self.exponents
        return ResonanceEntry(_CONJ[self.component], (m2, m1, n2, n1), self.strong, self.real_names)


@dataclass
class ResonanceReport:
    alpha: float
    entries: List[ResonanceEntry] = field(default_factory=list)
    removable: int = 0

    @property
    def strong(self) -> bool:
        return any(e.strong for e in self.entries)

    def real_monomials(self, order: Optional[int] = None) -> set:
        names = set()
        for e in self.entries:
            if order is None or e.order == order:
                names.update(e.real_names)
        return names


def _power(var: str, k: int) -> str:
    return "" if k == 0 else (var if k == 1 else f"{var}^{k}")


def _real_names(component: str, exps) -> Tuple[str, ...]:
    m1, m2, n1, n2 = exps
    k = min(n1, n2)
    rho = "" if k == 0 else ("(u^2+v^2)" if k == 1 else f"(u^2+v^2)^{k}")
    if n1 == n2:
        return (_power("x", m1) + _power("y", m2) + rho,)
    if abs(n1 - n2) == 1:
        prefix = _power("x", m1) + _power("y", m2)
        return tuple(prefix + var + rho for var in ("u", "v"))
    zpart = _power("z", n1) + _power("conj(z)", n2)
    return (f"{_power('x', m1)}{_power('y', m2)}{zpart}->{component}",)


def enumerate_resonances(alpha: float, max_order: int = 3, tol_res: float = 1e-3) -> ResonanceReport:
    """All monomials of order 2..max_order resonant with the multipliers.

    Monomial x^m1 y^m2 z^n1 zbar^n2 is resonant in component c when
    m1 - m2 equals the hyperbolic exponent of c and (n1 - n2 - k_c) alpha is a
    multiple of 2 pi, with k_c = +1, -1 for z, zbar.
    """
    report = ResonanceReport(alpha)
    for order in range(2, max_order + 1):
        for exps in product(range(order + 1), repeat=4):
            if sum(exps) != order:
                continue
            m1, m2, n1, n2 = exps
            for comp in COMPONENTS:
                hyp, ell = _SHIFT[comp]
                if m1 - m2 != hyp:
                    continue
                k = n1 - n2 - ell
                phase = math.remainder(k * alpha, 2.0 * math.pi)
                if abs(phase) > tol_res:
                    report.removable += 1
                    continue
                report.entries.append(ResonanceEntry(comp, exps, k != 0, _real_names(comp, exps)))
    return report


# -- normal form ----------------------------------------------------------

@dataclass(frozen=True)
class NormalFormCoeffs:
    a: float
    b: float
    nu: float
    kappa: float
    residual: float
    tol_nf: float = 1e-6

    @property
    def certified(self) -> bool:
        return self.residual <= self.tol_nf

    @property
    def twist_ok(self) -> bool:
        return abs(self.nu) > self.tol_nf


def _richardson(vals):
    d_h, d_h2, d_h4 = vals
    r1 = (4.0 * d_h2 - d_h) / 3.0
    r2 = (4.0 * d_h4 - d_h2) / 3.0
    return (16.0 * r2 - r1) / 15.0


def taylor_tensors(jac_rule: Callable, step: float = 1e-2):
    """Linear part, order-2 and order-3 symmetric Taylor tensors at the origin.

    Derivatives come from central differences of the Jacobian with two levels
    of Richardson extrapolation.
    """
    eye = np.eye(4)
    J0 = jac_rule(np.zeros(4))
    d1_levels, d2_levels = [], []
    for h in (step, step / 2.0, step / 4.0):
        plus = jac_rule(h * eye)
        minus = jac_rule(-h * eye)
        d1_levels.append(np.stack([(plus[l] - minus[l]) / (2.0 * h) for l in range(4)], axis=-1))
        d2 = np.zeros((4, 4, 4, 4))
        for l in range(4):
            d2[..., l, l] = (plus[l] - 2.0 * J0 + minus[l]) / (h * h)
        for l, m in combinations_with_replacement(range(4), 2):
            if l == m:
                continue
            pts = h * np.array([eye[l] + eye[m], eye[l] - eye[m], -eye[l] + eye[m], -eye[l] - eye[m]])
            Jp = jac_rule(pts)
            val = (Jp[0] - Jp[1] - Jp[2] + Jp[3]) / (4.0 * h * h)
            d2[..., l, m] = val
            d2[..., m, l] = val
        d2_levels.append(d2)
    D1 = _richardson(d1_levels)
    D2 = _richardson(d2_levels)
    T2 = 0.5 * D1
    T2 = 0.5 * (T2 + np.swapaxes(T2, 1, 2))
    T3 = _symmetrize3(D2 / 6.0)
    return J0, T2, T3


def _symmetrize3(T):
    perms = [(0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3), (0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1)]
    return sum(np.transpose(T, p) for p in perms) / 6.0


# (x, y, u, v) = P (x, y, z, zbar)
_P = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0.5, 0.5], [0, 0, -0.5j, 0.5j]], dtype=complex)
_PINV = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 1j], [0, 0, 1, -1j]], dtype=complex)


def extract_normal_form(fmap: SmoothMap4, spectrum: Spectrum1Elliptic, point=None,
                        step: float = 1e-2, tol_div: float = 1e-4, tol_nf: float = 1e-6,
                        tol_res: float = 1e-3) -> NormalFormCoeffs:
    """Third-order normal-form coefficients (a, b, nu, kappa) at a fixed point."""
    hit = near_strong_resonance(spectrum.alpha, tol_res)
    if hit is not None:
        raise StrongResonance(f"alpha = {spectrum.alpha} within {tol_res} of {hit}")
    p0 = np.zeros(4) if point is None else np.asarray(point, dtype=float)
    B = spectrum.basis
    Binv = np.linalg.inv(B)

    def jac_rule(zeta):
        return Binv @ fmap.jac(p0 + np.asarray(zeta) @ B.T) @ B

    J0, T2, T3 = taylor_tensors(jac_rule, step)
    G1 = _PINV @ J0 @ _P
    lam = np.diag(G1).copy()
    offdiag = float(np.max(np.abs(G1 - np.diag(lam))))
    G2 = np.einsum("ia,abc,bk,cl->ikl", _PINV, T2, _P, _P)
    G3 = np.einsum("ia,abcd,bk,cl,dm->iklm", _PINV, T3, _P, _P, _P)

    divisors = lam[None, :, None] * lam[None, None, :] - lam[:, None, None]
    if np.min(np.abs(divisors)) < tol_div:
        raise IllConditionedHomological(f"homological divisor {np.min(np.abs(divisors)):.3e} < {tol_div}")
    H2 = G2 / divisors
    N3 = G3 + _symmetrize3(2.0 * np.einsum("iab,bkl->iakl", G2, H2))

    X, Y, Z, ZB = 0, 1, 2, 3
    a = 3.0 * N3[X, X, X, Y] / lam[X]
    b = 6.0 * N3[X, X, Z, ZB] / lam[X]
    a_y = -3.0 * N3[Y, X, Y, Y] / lam[Y]
    b_y = -6.0 * N3[Y, Y, Z, ZB] / lam[Y]
    nu = 3.0 * N3[Z, Z, Z, ZB] / (1j * lam[Z])
    kappa = 6.0 * N3[Z, X, Y, Z] / (1j * lam[Z])
    residual = max(
        abs(nu.imag), abs(kappa.imag), abs(a.imag), abs(b.imag),
        abs(a - a_y), abs(b - b_y), offdiag,
    )
    coeffs = NormalFormCoeffs(float(a.real), float(b.real), float(nu.real), float(kappa.real),
                              float(residual), tol_nf)
    logger.debug("normal_form", extra={"a": coeffs.a, "b": coeffs.b, "nu": coeffs.nu,
                                       "kappa": coeffs.kappa, "residual": coeffs.residual})
    return coeffs
