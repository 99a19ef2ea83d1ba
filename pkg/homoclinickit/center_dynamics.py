"""Dynamics on the center plane W^c = {x = y = 0} and the fibers over it.

The restricted map is studied in Moser's scaling: action I corresponds to the
radius r = eps * sqrt(2 I). Fibers of W^{cu} (unstable side, chart (y, u, v))
and W^{cs} (stable side, chart (x, u, v)) are computed as the fixed point of
the line-transport recursion

    s_{n+1} = (g_n + G_n s_n) / a_n,

where a_n, g_n, G_n are the expanding entry, its center column and the center
block of the chart Jacobian of F at m_n; F = f on the unstable side and
F = f^-1 on the stable side.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from .errors import (
    CenterNotInvariant,
    EscapedAnnulus,
    NewtonDivergence,
    NoContraction,
    NonSymplecticJacobian,
    ValidationError,
)
from .model_zoo import MapModel
from .symplectic_core import STRUCTURE, invert, rotation

logger = logging.getLogger("homoclinickit.center_dynamics")

QUASIPERIODIC = "quasiperiodic"
RESONANT = "resonant"
CHAOTIC = "chaotic"

ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"
DEGENERATE_FAMILY = "degenerate-family"

UNSTABLE = "unstable"
STABLE = "stable"


# -- restricted map -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CenterMap:
    """Area-preserving map of the (u, v) plane with its twist data."""
    evaluate: Callable[[np.ndarray], np.ndarray]
    alpha: float
    nu: float
    moser_eps: float = 0.1
    jacobian_rule: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    area_residual: float = 0.0
    name: str = "center"

    def __call__(self, z) -> np.ndarray:
        return self.evaluate(np.asarray(z, dtype=float))

    def jac(self, z, h: float = 1e-7) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.jacobian_rule is not None:
            return self.jacobian_rule(z)
        cols = [(self.evaluate(z + h * e) - self.evaluate(z - h * e)) / (2.0 * h) for e in np.eye(2)]
        return np.stack(cols, axis=-1)

    def radius(self, I) -> np.ndarray:
        return self.moser_eps * np.sqrt(2.0 * np.asarray(I, dtype=float))

    def action(self, r) -> np.ndarray:
        return 0.5 * (np.asarray(r, dtype=float) / self.moser_eps) ** 2


def restrict_to_center(model: MapModel, samples: int = 1000, radius: float = 0.3,
                       seed: int = 0, tol_inv: float = 1e-12, tol_area: float = 1e-10) -> CenterMap:
    """(u, v) -> f(0, 0, u, v)[2:], after checking that W^c is exactly invariant."""
    local = model.local
    rng = np.random.default_rng(seed)
    uv = rng.uniform(-radius, radius, size=(samples, 2))
    q = np.column_stack([np.zeros((samples, 2)), uv])
    img = local(q)
    leak = float(np.max(np.abs(img[:, :2])))
    if leak > tol_inv:
        raise CenterNotInvariant(f"f moves W^c off itself by {leak:.3e}")
    dets = np.linalg.det(local.jac(q)[:, 2:, 2:])
    area = float(np.max(np.abs(dets - 1.0)))
    if area > tol_area:
        raise NonSymplecticJacobian(f"restricted map changes area by {area:.3e}")

    def lift(z):
        z = np.asarray(z, dtype=float)
        return np.concatenate([np.zeros(z.shape[:-1] + (2,)), z], axis=-1)

    def evaluate(z):
        return local(lift(z))[..., 2:]

    def jac(z):
        return local.jac(lift(z))[..., 2:, 2:]

    def inverse(z):
        return invert(local, lift(z))[..., 2:]

    logger.debug("center_restriction", extra={"leak": leak, "area_residual": area})
    return CenterMap(evaluate, model.alpha, model.params.nu, model.moser_eps, jac, inverse, area)


# -- rotation numbers -------------------------------------------------------

@dataclass(frozen=True)
class RotationEstimate:
    value: float
    error: float
    n_iter: int

    def __float__(self) -> float:
        return self.value


def _bump_weights(n: int) -> np.ndarray:
    t = (np.arange(n) + 0.5) / n
    w = np.exp(-1.0 / (t * (1.0 - t)))
    return w / w.sum()


def center_orbit(cm: CenterMap, p0, n_iter: int,
                 annulus: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Points z_0 .. z_n of the orbit of p0, kept inside the widened annulus."""
    z = np.asarray(p0, dtype=float).reshape(2)
    r0 = float(np.hypot(*z))
    r_min, r_max = annulus if annulus is not None else (r0, r0)
    lo, hi = 0.5 * r_min, 2.0 * r_max
    out = np.empty((n_iter + 1, 2))
    out[0] = z
    for k in range(1, n_iter + 1):
        z = cm(z)
        r = math.hypot(z[0], z[1])
        if not (lo <= r <= hi):
            raise EscapedAnnulus(f"orbit of {np.asarray(p0).tolist()} left [{lo:.3g}, {hi:.3g}] at step {k}")
        out[k] = z
    return out


def _increments(orbit: np.ndarray, alpha: float) -> np.ndarray:
    theta = np.arctan2(orbit[:, 1], orbit[:, 0])
    d = np.diff(theta)
    # wrapped into (alpha - pi, alpha + pi]
    return alpha + math.pi - np.mod(alpha + math.pi - d, 2.0 * math.pi)


def _weighted_average(inc: np.ndarray) -> float:
    return float(_bump_weights(len(inc)) @ inc)


def rotation_number_estimate(cm: CenterMap, p0, n_iter: int = 10000,
                             annulus: Optional[Tuple[float, float]] = None) -> RotationEstimate:
    """Weighted Birkhoff average of the angle increments and its half-window error."""
    p0 = np.asarray(p0, dtype=float).reshape(2)
    if float(np.hypot(*p0)) <= 1e-14:
        angle = float(np.max(np.abs(np.angle(np.linalg.eigvals(cm.jac(p0))))))
        return RotationEstimate(angle, 0.0, 0)
    if n_iter < 4:
        raise ValidationError("rotation number needs at least 4 iterations")
    inc = _increments(center_orbit(cm, p0, n_iter, annulus), cm.alpha)
    full = _weighted_average(inc)
    half = _weighted_average(inc[: n_iter // 2])
    return RotationEstimate(full, abs(full - half), n_iter)


def rotation_number(cm: CenterMap, p0, n_iter: int = 10000) -> float:
    return rotation_number_estimate(cm, p0, n_iter).value


# -- continued fractions --------------------------------------------------

def continued_fraction(x: float, depth: int = 8, eps: float = 1e-12) -> List[int]:
    """Partial quotients a_0, a_1, ... of x, stopping early when x is rational to ``eps``."""
    coeffs = []
    for _ in range(depth + 1):
        n, rem = divmod(x, 1.0)
        coeffs.append(int(n))
        if rem < eps:
            break
        x = 1.0 / rem
    return coeffs


def diophantine_like(x: float, max_quotient: int = 50, depth: int = 8) -> bool:
    """Partial quotients a_1..a_depth all bounded by ``max_quotient``."""
    coeffs = continued_fraction(x, depth)
    if len(coeffs) < depth + 1:
        return False
    return all(a <= max_quotient for a in coeffs[1:])


# -- KAM curves -----------------------------------------------------------

@dataclass(frozen=True)
class KamCriteria:
    degree: int = 8
    n_iter: int = 4096
    tol_kam: float = 1e-8
    chaos_residual: float = 1e-3
    max_quotient: int = 50
    depth: int = 8
    threads: int = 1


@dataclass(frozen=True, eq=False)
class KamCurve:
    """Invariant-curve candidate r = r(theta) through (eps sqrt(2I), 0)."""
    action: float
    rotation_number: float
    rotation_error: float
    coefficients: np.ndarray
    residual: float
    verdict: str
    quotients: Tuple[int, ...]
    circle_deviation: float
    moser_eps: float

    @property
    def degree(self) -> int:
        return (len(self.coefficients) - 1) // 2

    def radius(self, theta) -> np.ndarray:
        return _trig_basis(theta, self.degree) @ self.coefficients

    def points(self, n: int = 256) -> np.ndarray:
        th = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        r = self.radius(th)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])

    def side_function(self, z) -> np.ndarray:
        """|z| - r(arg z): zero on the curve."""
        z = np.asarray(z, dtype=float)
        return np.hypot(z[..., 0], z[..., 1]) - self.radius(np.arctan2(z[..., 1], z[..., 0]))


def _trig_basis(theta, degree: int) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    k = np.arange(1, degree + 1)
    ang = th[..., None] * k
    return np.concatenate([np.ones(th.shape + (1,)), np.cos(ang), np.sin(ang)], axis=-1)


def fit_radial_curve(orbit: np.ndarray, degree: int) -> Tuple[np.ndarray, float]:
    """Least-squares trigonometric fit r(theta) of orbit samples and its max residual."""
    theta = np.arctan2(orbit[:, 1], orbit[:, 0])
    r = np.hypot(orbit[:, 0], orbit[:, 1])
    A = _trig_basis(theta, degree)
    coeffs = np.linalg.lstsq(A, r, rcond=None)[0]
    return coeffs, float(np.max(np.abs(A @ coeffs - r)))


def _scan_action(cm: CenterMap, I: float, crit: KamCriteria) -> KamCurve:
    r0 = float(cm.radius(I))
    try:
        orbit = center_orbit(cm, (r0, 0.0), crit.n_iter)
    except EscapedAnnulus:
        logger.info("kam_escape", extra={"action": I})
        return KamCurve(I, math.nan, math.inf, np.zeros(2 * crit.degree + 1), math.inf, CHAOTIC, (),
                        math.inf, cm.moser_eps)
    inc = _increments(orbit, cm.alpha)
    rho = _weighted_average(inc)
    err = abs(rho - _weighted_average(inc[: crit.n_iter // 2]))
    coeffs, residual = fit_radial_curve(orbit[1:], crit.degree)
    quotients = tuple(continued_fraction(rho / (2.0 * math.pi), crit.depth))
    stable = err <= 10.0 / crit.n_iter
    dioph = diophantine_like(rho / (2.0 * math.pi), crit.max_quotient, crit.depth)
    if residual > crit.chaos_residual:
        verdict = CHAOTIC
    elif residual <= crit.tol_kam and stable and dioph:
        verdict = QUASIPERIODIC
    else:
        verdict = RESONANT
    th = np.linspace(0.0, 2.0 * math.pi, 256, endpoint=False)
    r_fit = _trig_basis(th, crit.degree) @ coeffs
    deviation = float(np.max(np.abs(r_fit ** 2 - 2.0 * cm.moser_eps ** 2 * I))) / cm.moser_eps ** 2
    return KamCurve(float(I), rho, err, coeffs, residual, verdict, quotients, deviation, cm.moser_eps)


def detect_kam_curves(cm: CenterMap, I_grid: Sequence[float],
                      criteria: Optional[KamCriteria] = None) -> List[KamCurve]:
    """Verdict and fitted curve per grid action, merged in grid order."""
    crit = criteria or KamCriteria()
    if cm.nu == 0.0:
        raise ValidationError("KAM scan needs a non-zero twist coefficient")
    grid = [float(I) for I in I_grid]
    if any(I <= 0.0 for I in grid):
        raise ValidationError("actions must be positive")
    if crit.threads > 1:
        with ThreadPoolExecutor(max_workers=crit.threads) as pool:
            curves = list(pool.map(lambda I: _scan_action(cm, I, crit), grid))
    else:
        curves = [_scan_action(cm, I, crit) for I in grid]
    logger.info("kam_scan", extra={"actions": len(grid),
                                   "quasiperiodic": sum(c.verdict == QUASIPERIODIC for c in curves)})
    return curves


def kam_rows(curves: Sequence[KamCurve]) -> List[Tuple[float, float, str, float]]:
    """CSV rows (I, rotation_number, verdict, residual)."""
    return [(c.action, c.rotation_number, c.verdict, c.residual) for c in curves]


# -- periodic orbits ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PeriodicOrbitRecord:
    period: int
    points: np.ndarray
    residual: float
    trace: float
    classification: str
    rotation: Tuple[int, int]


def periodic_rows(records: Sequence[PeriodicOrbitRecord]) -> List[Tuple[int, int, str, float, float, float, float]]:
    """CSV rows (p, q, classification, trace, residual, u0, v0)."""
    return [(r.rotation[0], r.rotation[1], r.classification, r.trace, r.residual,
             float(r.points[0, 0]), float(r.points[0, 1])) for r in records]


def _power_with_jacobian(cm: CenterMap, z: np.ndarray, q: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = [z]
    J = np.eye(2)
    for _ in range(q):
        J = cm.jac(pts[-1]) @ J
        pts.append(cm(pts[-1]))
    return pts[-1], J, np.array(pts[:-1])


def _newton_periodic(cm: CenterMap, z0: np.ndarray, q: int, tol: float, max_iter: int,
                     max_step: float = 0.25) -> np.ndarray:
    """Damped Newton on f^q(z) - z; steps are capped at ``max_step * |z0|``."""
    z = np.array(z0, dtype=float)
    cap = max_step * max(float(np.linalg.norm(z)), 1e-3)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            fq, J, _ = _power_with_jacobian(cm, z, q)
            r = fq - z
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
                break
            if np.max(np.abs(r)) <= tol:
                return z
            try:
                step = np.linalg.lstsq(J - np.eye(2), -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            norm = float(np.linalg.norm(step))
            if norm > cap:
                step *= cap / norm
            z = z + step
    raise NewtonDivergence(f"period-{q} Newton did not converge from {np.asarray(z0).tolist()}")


def classify_trace(trace: float, tol_class: float = 1e-6) -> str:
    if abs(trace) < 2.0 - tol_class:
        return ELLIPTIC
    if abs(trace) > 2.0 + tol_class:
        return HYPERBOLIC
    return DEGENERATE_FAMILY


def find_periodic_orbits(cm: CenterMap, q: int, rotation_interval: Tuple[float, float],
                         n_radial: int = 7, n_angular: int = 24, window: float = 0.15,
                         tol: float = 1e-12, max_iter: int = 50,
                         tol_class: float = 1e-6) -> List[PeriodicOrbitRecord]:
    """Birkhoff periodic orbits of period q with rotation 2 pi p / q inside the interval."""
    if q < 1:
        raise ValidationError("period must be positive")
    if cm.nu == 0.0:
        raise ValidationError("periodic-orbit search needs a non-zero twist coefficient")
    lo, hi = rotation_interval
    records: List[PeriodicOrbitRecord] = []
    p_lo, p_hi = int(math.ceil(lo * q / (2.0 * math.pi))), int(math.floor(hi * q / (2.0 * math.pi)))
    for p in range(p_lo, p_hi + 1):
        r2 = (2.0 * math.pi * p / q - cm.alpha) / cm.nu
        if r2 <= 0.0:
            continue
        r_res = math.sqrt(r2)
        for rr in r_res * (1.0 + np.linspace(-window, window, n_radial)):
            for phi in np.linspace(0.0, 2.0 * math.pi, n_angular, endpoint=False):
                seed = np.array([rr * math.cos(phi), rr * math.sin(phi)])
                try:
                    z = _newton_periodic(cm, seed, q, tol, max_iter)
                except NewtonDivergence:
                    logger.debug("periodic_seed_failed", extra={"p": p, "q": q, "radius": rr, "angle": phi})
                    continue
                if math.hypot(*z) < 0.5 * r_res:
                    continue
                if any(np.min(np.linalg.norm(rec.points - z, axis=1)) < 1e-7 for rec in records):
                    continue
                fq, J, pts = _power_with_jacobian(cm, z, q)
                winding = float(np.sum(_increments(np.vstack([pts, fq]), cm.alpha)))
                if round(winding / (2.0 * math.pi)) != p:
                    continue
                tr = float(np.trace(J))
                records.append(PeriodicOrbitRecord(q, pts, float(np.max(np.abs(fq - z))), tr,
                                                   classify_trace(tr, tol_class), (p, q)))
    logger.info("periodic_orbits", extra={"q": q, "found": len(records)})
    return records


# -- fibers ---------------------------------------------------------------

@dataclass(frozen=True)
class _Side:
    forward: Callable[[np.ndarray], np.ndarray]
    backward: Callable[[np.ndarray], np.ndarray]
    expanding: int


def _side_maps(model: MapModel, side: str) -> _Side:
    local = model.local
    if side == UNSTABLE:
        return _Side(local.evaluate, lambda z: invert(local, z), 1)
    if side == STABLE:
        return _Side(lambda z: invert(local, z), local.evaluate, 0)
    raise ValidationError(f"side must be 'stable' or 'unstable', got {side!r}")


def asymptotic_center_point(model: MapModel, z, side: str, tol: float = 1e-14,
                            max_steps: int = 4000) -> np.ndarray:
    """Foot on W^c of the fiber through z.

    Pulls z back until its hyperbolic coordinate is below ``tol``, drops that
    coordinate and carries the center point forward again on W^c.
    """
    sm = _side_maps(model, side)
    z = np.array(z, dtype=float)
    n = 0
    while np.max(np.abs(z[..., sm.expanding])) > tol:
        z = sm.backward(z)
        n += 1
        if n > max_steps or not np.all(np.isfinite(z)):
            raise ValidationError(f"point does not approach W^c on the {side} side")
    c = np.zeros_like(z)
    c[..., 2:] = z[..., 2:]
    for _ in range(n):
        c = sm.forward(c)
    return c


def fiber_fixed_point(a: np.ndarray, g: np.ndarray, G: np.ndarray, tol: float = 1e-13,
                      max_iter: int = 1000) -> Tuple[np.ndarray, Tuple[float, ...]]:
    """Picard iteration of s_{n+1} = (g_n + G_n s_n) / a_n with s_0 = 0.

    ``a`` has shape (K,), ``g`` (K, 2), ``G`` (K, 2, 2); returns slopes (K+1, 2).
    """
    K = len(a)
    s = np.zeros((K + 1, 2))
    corrections = []
    for _ in range(max_iter):
        new = np.empty_like(s)
        new[0] = 0.0
        new[1:] = (g + np.einsum("nij,nj->ni", G, s[:-1])) / a[:, None]
        corr = float(np.max(np.abs(new - s)))
        corrections.append(corr)
        s = new
        if corr <= tol:
            break
    return s, tuple(corrections)


@dataclass(frozen=True, eq=False)
class FiberSolution:
    """Line field (1, p_n, q_n) in the chart of W^{cu} or W^{cs} along the orbit of m."""
    base_point: np.ndarray
    side: str
    indices: np.ndarray
    orbit: np.ndarray
    slopes: np.ndarray
    lipschitz: float
    corrections: Tuple[float, ...]
    tail_bound: float
    alpha_star: float
    rho_star: float
    tau_star: float
    delta1: float
    delta2: float
    alpha_bounds: Tuple[float, float]
    rho_bounds: Tuple[float, float]
    tau_bounds: Tuple[float, float]

    @property
    def T(self) -> int:
        return int(self.indices[-1])

    @property
    def expanding(self) -> int:
        return 1 if self.side == UNSTABLE else 0

    @property
    def converged(self) -> bool:
        return len(self.corrections) > 0 and self.corrections[-1] <= 1e-13

    @property
    def certified(self) -> bool:
        """alpha* < 1, rho* < 1 and tau* < 1/2."""
        return self.alpha_star < 1.0 and self.rho_star < 1.0 and self.tau_star < 0.5

    def slope(self, n: int = 0) -> np.ndarray:
        return self.slopes[int(n) + self.T]

    def direction(self, n: int = 0) -> np.ndarray:
        """Unit fiber direction at m_n as a 4-vector."""
        d = np.zeros(4)
        d[self.expanding] = 1.0
        d[2:] = self.slope(n)
        return d / np.linalg.norm(d)


def _side_orbit(sm: _Side, m: np.ndarray, T: int) -> np.ndarray:
    fwd, bwd = [m], [m]
    for _ in range(T):
        fwd.append(sm.forward(fwd[-1]))
        bwd.append(sm.backward(bwd[-1]))
    return np.vstack([np.array(bwd[:0:-1]).reshape(-1, 4), np.array(fwd)])


def _forward_jacobians(model: MapModel, side: str, orbit: np.ndarray) -> np.ndarray:
    """DF at orbit[0..-2]."""
    local = model.local
    if side == UNSTABLE:
        return local.jac(orbit[:-1])
    return np.linalg.inv(local.jac(orbit[1:]))


def _tau_bounds(mu: float, d1: float, d2: float) -> Tuple[float, float]:
    t1 = math.log(1 + 2 * d2) / (math.log((1 - mu * d1) * (1 - 2 * d2)) - math.log(mu))
    t2 = math.log(1 - 2 * d2) / (math.log((1 + mu * d1) * (1 + 2 * d2)) - math.log(mu))
    return t2, t1


def solve_fiber(model: MapModel, m, side: str = UNSTABLE, T: int = 40,
                tol_fiber: float = 1e-13) -> FiberSolution:
    """Fiber direction field along the orbit of m in W^c with growth diagnostics."""
    sm = _side_maps(model, side)
    m = np.asarray(m, dtype=float).reshape(4)
    if np.max(np.abs(m[:2])) > 1e-12:
        raise ValidationError("fiber base point must lie on W^c")
    if T < 2:
        raise ValidationError("T must be at least 2")
    mu = model.mu
    orbit = _side_orbit(sm, m, T)
    J = _forward_jacobians(model, side, orbit)
    c = [sm.expanding, 2, 3]
    D = J[:, c][:, :, c]
    a, g, G = D[:, 0, 0], D[:, 1:, 0], D[:, 1:, 1:]
    lip = float(np.max(np.linalg.norm(G, ord=2, axis=(1, 2)) / np.abs(a)))
    if lip >= 1.0:
        raise NoContraction(f"fiber recursion Lipschitz constant {lip:.3f} >= 1; shrink the neighbourhood")
    slopes, corrections = fiber_fixed_point(a, g, G, tol_fiber)
    gmax = float(np.max(np.linalg.norm(g, axis=1) / np.abs(a))) if len(a) else 0.0
    tail = lip ** T * gmax / (1.0 - lip)

    # growth under DF^-1 from m_0 back to m_-T
    Dinv = np.linalg.inv(D[:T][::-1])
    eta, W = 1.0, np.eye(3)[:, 1:]
    for Di in Dinv:
        eta = Di[0, 0] * eta
        W = Di @ W
    sv = np.linalg.svd(W[1:], compute_uv=False)
    alpha_star = abs(eta) ** (1.0 / T)
    rho_star = alpha_star / sv[-1] ** (1.0 / T)
    grow = sv[0] ** (1.0 / T)
    tau_star = math.log(grow) / -math.log(rho_star) if rho_star < 1.0 else math.inf

    n = np.arange(-T, T)
    h = a - 1.0 / mu
    delta1 = float(np.max(np.abs(h)))
    back = np.linalg.inv(G)
    alpha = model.alpha if side == UNSTABLE else -model.alpha
    # inverse center block in the frame co-rotating with R_{n alpha}
    l = (np.einsum("nij,njk,nkl->nil", rotation(-n * alpha), back, rotation((n + 1) * alpha))
         - np.eye(2))
    delta2 = float(np.max(np.abs(l)))
    if mu * delta1 >= 1.0 or 2.0 * delta2 >= 1.0:
        raise NoContraction(f"growth brackets undefined (delta1 = {delta1:.3e}, delta2 = {delta2:.3e})")
    alpha_bounds = (mu / (1 + mu * delta1), mu / (1 - mu * delta1))
    rho_bounds = (mu / ((1 + mu * delta1) * (1 + 2 * delta2)), mu / ((1 - mu * delta1) * (1 - 2 * delta2)))
    sol = FiberSolution(m, side, np.arange(-T, T + 1), orbit, slopes, lip, corrections, tail,
                        alpha_star, rho_star, tau_star, delta1, delta2, alpha_bounds, rho_bounds,
                        _tau_bounds(mu, delta1, delta2))
    logger.debug("fiber", extra={"side": side, "lipschitz": lip, "alpha_star": alpha_star,
                                 "rho_star": rho_star, "tau_star": tau_star})
    return sol


def graph_transform_direction(model: MapModel, m, side: str = UNSTABLE, k: int = 50) -> np.ndarray:
    """Chart slope at m of a transversal line carried forward from m_-k by DF."""
    sm = _side_maps(model, side)
    pts = [np.asarray(m, dtype=float).reshape(4)]
    for _ in range(k):
        pts.append(sm.backward(pts[-1]))
    pts = np.array(pts[::-1])
    J = _forward_jacobians(model, side, pts)
    v = np.zeros(4)
    v[sm.expanding] = 1.0
    for Jn in J:
        v = Jn @ v
        v = v / np.linalg.norm(v)
    return v[2:] / v[sm.expanding]


def fiber_points(model: MapModel, sol: FiberSolution, offsets: Sequence[float], n: int = 0,
                 pullback: Optional[int] = None) -> np.ndarray:
    """Points of the nonlinear fiber through m_n at expanding-coordinate offsets.

    Linear seeds on the fiber direction at m_{n-k} are carried k steps forward.
    """
    sm = _side_maps(model, sol.side)
    offsets = np.asarray(offsets, dtype=float)
    top = float(np.max(np.abs(offsets))) if offsets.size else 0.0
    if pullback is None:
        pullback = 0 if top == 0.0 else max(0, int(math.ceil(math.log(1e-8 / top) / math.log(model.mu))))
    k = min(pullback, n + sol.T)
    vec = np.zeros(4)
    vec[sm.expanding] = 1.0
    vec[2:] = sol.slope(n - k)
    z = sol.orbit[n - k + sol.T] + np.outer(offsets * model.mu ** k, vec)
    for _ in range(k):
        z = sm.forward(z)
    return z


def fenichel_residual(model: MapModel, sol: FiberSolution, offsets: Sequence[float] = (0.02, 0.05, 0.1)) -> float:
    """max |foot(F^-1 z) - m_-1| over samples z of the fiber through m_0."""
    sm = _side_maps(model, sol.side)
    z = fiber_points(model, sol, offsets)
    feet = asymptotic_center_point(model, sm.backward(z), sol.side)
    return float(np.max(np.abs(feet - sol.orbit[sol.T - 1])))


# -- KAM cylinders ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KamCylinder:
    """Samples of W^s(gamma) or W^u(gamma); grid[j, i] lies on the fiber over base j."""
    side: str
    grid: np.ndarray
    base: np.ndarray
    offsets: np.ndarray
    invariance_residual: float
    lagrangian_residual: float

    def rows(self) -> List[Tuple[int, int, float, float, float, float]]:
        return [(j, i, *map(float, self.grid[j, i]))
                for j in range(self.grid.shape[0]) for i in range(self.grid.shape[1])]


def _lagrangian_residual(grid: np.ndarray) -> float:
    along_fiber = np.gradient(grid, axis=1)
    nb = grid.shape[0]
    along_base = (grid[(np.arange(nb) + 1) % nb] - grid[(np.arange(nb) - 1) % nb]) / 2.0
    omega = np.einsum("jia,ab,jib->ji", along_fiber, STRUCTURE, along_base)
    norm = np.linalg.norm(along_fiber, axis=-1) * np.linalg.norm(along_base, axis=-1)
    ok = norm > 0.0
    return float(np.max(np.abs(omega[ok]) / norm[ok])) if np.any(ok) else 0.0


def build_kam_cylinder(model: MapModel, curve: KamCurve, side: str = UNSTABLE, extent: float = 0.3,
                       n_base: int = 32, n_fiber: int = 9, T: int = 40) -> KamCylinder:
    """Sample the invariant cylinder of a KAM curve as fibers over curve samples."""
    if extent <= 0.0:
        raise ValidationError("cylinder extent must be positive")
    uv = curve.points(n_base)
    base = np.column_stack([np.zeros((n_base, 2)), uv])
    offsets = np.linspace(0.0, extent, n_fiber)
    grid = np.empty((n_base, n_fiber, 4))
    for j, m in enumerate(base):
        sol = solve_fiber(model, m, side, T)
        grid[j] = fiber_points(model, sol, offsets)
        grid[j, 0] = m

    sm = _side_maps(model, side)
    pts = grid[:, 1:].reshape(-1, 4)
    feet = asymptotic_center_point(model, pts, side)
    images = asymptotic_center_point(model, sm.forward(pts), side)
    res = max(float(np.max(np.abs(curve.side_function(feet[:, 2:])))),
              float(np.max(np.abs(curve.side_function(images[:, 2:])))))
    lag = _lagrangian_residual(grid)
    logger.info("kam_cylinder", extra={"side": side, "invariance": res, "lagrangian": lag})
    return KamCylinder(side, grid, base, offsets, res, lag)
