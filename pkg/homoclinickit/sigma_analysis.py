"""The homoclinic disk Sigma and the traces of KAM cylinders on it.

Sigma- = {x = 0, y - y1 = Psi(u, v)} is the part of W^{cu} that the global map
sends into W^{cs}; Sigma+ = G(Sigma-) = {y = 0, x = Phi(ubar, vbar)}. Both
carry chart coordinates (u, v) in which omega = du ^ dv, so areas and
intersections are computed in the plane.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.spatial.distance import directed_hausdorff

from .center_dynamics import STABLE, UNSTABLE, KamCurve, asymptotic_center_point
from .errors import (
    ChartTooLarge,
    SectionMiss,
    SelfIntersecting,
    TangencySuspected,
    TransversalityFailure,
    ValidationError,
)
from .model_zoo import MapModel
from .scattering import GENERIC, ScatteringMap, check_genericity

logger = logging.getLogger("homoclinickit.sigma_analysis")


# -- the disk -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SigmaDisk:
    """Graph functions Phi (on the Sigma+ chart) and Psi (on the Sigma- chart)."""
    model: MapModel = field(repr=False)
    grid: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    phi_spline: RectBivariateSpline = field(repr=False)
    psi_spline: RectBivariateSpline = field(repr=False)
    interpolation_error: float
    mapping_residual: float
    nonlinearity: float
    chart_radius: float

    @property
    def q_plus(self) -> np.ndarray:
        return self.model.q_plus

    @property
    def q_minus(self) -> np.ndarray:
        return self.model.q_minus

    def minus_point(self, c) -> np.ndarray:
        """(0, y1 + Psi(c), c) with Psi solved exactly."""
        return _minus_points(self.model, np.asarray(c, dtype=float))

    def chart_map(self, c) -> np.ndarray:
        """Sigma- chart -> Sigma+ chart."""
        return self.model.global_map(self.minus_point(c))[..., 2:]

    def plus_point(self, cbar) -> np.ndarray:
        """(Phi(cbar), 0, cbar) with Phi solved exactly."""
        cbar = np.asarray(cbar, dtype=float)
        c = _invert_chart_map(self.model, cbar)
        return self.model.global_map(self.minus_point(c))

    def phi(self, ubar, vbar) -> np.ndarray:
        return self.phi_spline.ev(ubar, vbar)

    def psi(self, u, v) -> np.ndarray:
        return self.psi_spline.ev(u, v)


def _minus_points(model: MapModel, c: np.ndarray, tol: float = 1e-14, max_iter: int = 30) -> np.ndarray:
    """Solve ybar(0, y1 + eta, u, v) = 0 for eta, vectorized over c."""
    G = model.global_map
    q = np.zeros(c.shape[:-1] + (4,))
    q[..., 1] = model.q_minus[1]
    q[..., 2:] = c
    for _ in range(max_iter):
        r = G(q)[..., 1]
        if np.max(np.abs(r)) <= tol:
            return q
        dy = G.jac(q)[..., 1, 1]
        if np.min(np.abs(dy)) <= 1e-12:
            raise TransversalityFailure("G(W^cu) is tangent to {y = 0}: dybar/dy vanishes")
        q[..., 1] -= r / dy
    raise ChartTooLarge("Psi did not converge; shrink chart_radius")


def _chart_jacobian(model: MapModel, q: np.ndarray) -> np.ndarray:
    J = model.global_map.jac(q)
    dq = np.zeros(q.shape[:-1] + (4, 2))
    dq[..., 1, 0] = -J[..., 1, 2] / J[..., 1, 1]
    dq[..., 1, 1] = -J[..., 1, 3] / J[..., 1, 1]
    dq[..., 2, 0] = dq[..., 3, 1] = 1.0
    return J[..., 2:, :] @ dq


def _invert_chart_map(model: MapModel, cbar: np.ndarray, tol: float = 1e-14, max_iter: int = 30) -> np.ndarray:
    c = np.array(cbar, dtype=float, copy=True)
    for _ in range(max_iter):
        q = _minus_points(model, c)
        r = model.global_map(q)[..., 2:] - cbar
        if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(cbar))):
            return c
        D = _chart_jacobian(model, q)
        if np.min(np.abs(np.linalg.det(D))) <= 1e-10:
            raise ChartTooLarge("chart map is singular: Sigma folds over the chart")
        c = c - np.linalg.solve(D, r[..., None])[..., 0]
    raise ChartTooLarge("chart map inversion did not converge; shrink chart_radius")


def _quadratic_size(grid: np.ndarray, values: np.ndarray) -> float:
    U, V = np.meshgrid(grid, grid, indexing="ij")
    u, v, f = U.ravel(), V.ravel(), values.ravel()
    A = np.column_stack([np.ones_like(u), u, v, u * u, u * v, v * v])
    coeffs = np.linalg.lstsq(A, f, rcond=None)[0]
    return float(np.max(np.abs(coeffs[3:])))


def build_sigma_disk(model: MapModel, chart_radius: float = 0.5, n_grid: int = 33,
                     tol_interp: float = 1e-8) -> SigmaDisk:
    """Sample Psi and Phi on square chart grids and interpolate them."""
    if chart_radius <= 0.0 or n_grid < 4:
        raise ValidationError("chart_radius must be positive and n_grid at least 4")
    grid = np.linspace(-chart_radius, chart_radius, n_grid)
    U, V = np.meshgrid(grid, grid, indexing="ij")
    C = np.stack([U, V], axis=-1)
    minus = _minus_points(model, C)
    Psi = minus[..., 1] - model.q_minus[1]
    c_pre = _invert_chart_map(model, C)
    Phi = model.global_map(_minus_points(model, c_pre))[..., 0]
    phi_spline = RectBivariateSpline(grid, grid, Phi)
    psi_spline = RectBivariateSpline(grid, grid, Psi)

    mid = 0.5 * (grid[1:] + grid[:-1])
    Um, Vm = np.meshgrid(mid, mid, indexing="ij")
    Cm = np.stack([Um, Vm], axis=-1)
    psi_true = _minus_points(model, Cm)[..., 1] - model.q_minus[1]
    phi_true = model.global_map(_minus_points(model, _invert_chart_map(model, Cm)))[..., 0]
    err = max(float(np.max(np.abs(psi_spline.ev(Um, Vm) - psi_true))),
              float(np.max(np.abs(phi_spline.ev(Um, Vm) - phi_true))))
    if err > tol_interp:
        logger.warning("sigma_interpolation", extra={"error": err, "n_grid": n_grid})

    img = model.global_map(minus)
    on_plus = phi_spline.ev(img[..., 2], img[..., 3])
    inside = np.all(np.abs(img[..., 2:]) <= chart_radius, axis=-1)
    mapping = float(np.max(np.abs(img[..., 1])))
    if np.any(inside):
        mapping = max(mapping, float(np.max(np.abs(img[..., 0][inside] - on_plus[inside]))))
    nonlin = max(_quadratic_size(grid, Phi), _quadratic_size(grid, Psi))
    logger.info("sigma_disk", extra={"interpolation_error": err, "mapping_residual": mapping,
                                     "nonlinearity": nonlin})
    return SigmaDisk(model, grid, Phi, Psi, phi_spline, psi_spline, err, mapping, nonlin, chart_radius)


# -- traces ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TraceCurve:
    """Closed polygon w_s(gamma) or w_u(gamma) in the Sigma+ chart."""
    side: str
    action: float
    vertices: np.ndarray
    chart_vertices: np.ndarray
    section_residual: float
    closure_gap: float

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def bearings(self) -> np.ndarray:
        """Ray bearings on the source chart."""
        return 2.0 * math.pi * np.arange(self.n) / self.n

    def rows(self) -> List[Tuple[str, float, float, float]]:
        """(side, theta, u, v) in the Sigma+ chart."""
        return [(self.side, float(t), float(p[0]), float(p[1]))
                for t, p in zip(self.bearings, self.vertices)]


def _side_values(model: MapModel, curve: KamCurve, points: np.ndarray, side: str) -> np.ndarray:
    feet = asymptotic_center_point(model, points, side)
    return curve.side_function(feet[..., 2:])


def trace_manifold_on_sigma(model: MapModel, curve: KamCurve, side: str, sigma: SigmaDisk,
                            n_vertices: int = 256, tol: float = 1e-14,
                            max_bisect: int = 200) -> TraceCurve:
    """Bisect along chart rays for the points of Sigma whose fiber foot lies on gamma."""
    if side not in (STABLE, UNSTABLE):
        raise ValidationError(f"side must be 'stable' or 'unstable', got {side!r}")
    if n_vertices < 8:
        raise ValidationError("a trace needs at least 8 vertices")
    phi = 2.0 * math.pi * np.arange(n_vertices + 1) / n_vertices
    rays = np.column_stack([np.cos(phi), np.sin(phi)])
    lift = sigma.plus_point if side == STABLE else sigma.minus_point

    def values(t):
        return _side_values(model, curve, lift(t[:, None] * rays), side)

    lo = np.zeros(n_vertices + 1)
    hi = np.full(n_vertices + 1, sigma.chart_radius)
    f_lo, f_hi = values(lo), values(hi)
    miss = ~((f_lo < 0.0) & (f_hi > 0.0))
    if np.any(miss):
        bad = int(np.argmax(miss))
        raise SectionMiss(f"{side} cylinder does not cross Sigma along bearing {phi[bad]:.4f} "
                          f"within chart radius {sigma.chart_radius}")
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        f_mid = values(mid)
        below = f_mid < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    t = 0.5 * (lo + hi)
    chart = t[:, None] * rays
    residual = float(np.max(np.abs(values(t))))
    verts = chart if side == STABLE else sigma.chart_map(chart)
    gap = float(np.linalg.norm(verts[-1] - verts[0]))
    logger.debug("trace", extra={"side": side, "action": curve.action, "residual": residual, "gap": gap})
    return TraceCurve(side, curve.action, verts[:-1], chart[:-1], residual, gap)


# -- areas ----------------------------------------------------------------

_ORIENT_ERR = 3.3306690738754716e-16


def orient2d(a, b, c) -> np.ndarray:
    """Sign of the turn a -> b -> c; float filter with an exact rational fallback."""
    a, b, c = np.broadcast_arrays(*(np.asarray(p, dtype=float) for p in (a, b, c)))
    left = (a[..., 0] - c[..., 0]) * (b[..., 1] - c[..., 1])
    right = (a[..., 1] - c[..., 1]) * (b[..., 0] - c[..., 0])
    det = left - right
    sign = np.sign(det).reshape(-1)
    unsure = (np.abs(det) <= _ORIENT_ERR * (np.abs(left) + np.abs(right))).reshape(-1)
    flat = [p.reshape(-1, 2) for p in (a, b, c)]
    for k in np.flatnonzero(unsure):
        pa, pb, pc = ([Fraction(float(x)) for x in p[k]] for p in flat)
        exact = (pa[0] - pc[0]) * (pb[1] - pc[1]) - (pa[1] - pc[1]) * (pb[0] - pc[0])
        sign[k] = (exact > 0) - (exact < 0)
    return sign.reshape(det.shape)


def _crossing_pairs(P: np.ndarray, Q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index pairs (i, j) of proper crossings of edge P_i P_i+1 with edge Q_j Q_j+1."""
    a, b = P[:, None, :], np.roll(P, -1, axis=0)[:, None, :]
    c, d = Q[None, :, :], np.roll(Q, -1, axis=0)[None, :, :]
    o1, o2 = orient2d(a, b, c), orient2d(a, b, d)
    o3, o4 = orient2d(c, d, a), orient2d(c, d, b)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    i, j = np.nonzero(hit)
    return i, j, hit


def _check_simple(P: np.ndarray) -> None:
    n = len(P)
    i, j, _ = _crossing_pairs(P, P)
    adjacent = (np.abs(i - j) <= 1) | (np.abs(i - j) == n - 1)
    if np.any(~adjacent):
        k = int(np.argmax(~adjacent))
        raise SelfIntersecting(f"edges {int(i[k])} and {int(j[k])} of the polygon cross")


def shoelace(P: np.ndarray) -> float:
    P = np.asarray(P, dtype=float)
    nxt = np.roll(P, -1, axis=0)
    return 0.5 * float(np.sum(P[:, 0] * nxt[:, 1] - nxt[:, 0] * P[:, 1]))


def enclosed_action(tc: TraceCurve) -> float:
    """Area enclosed by a simple trace, orientation normalized positive."""
    _check_simple(tc.vertices)
    return abs(shoelace(tc.vertices))


# -- intersections --------------------------------------------------------

DEGENERATE_OVERLAP = "degenerate overlap"
TRANSVERSE = "transverse"


@dataclass(frozen=True, eq=False)
class IntersectionReport:
    points: np.ndarray
    angles: np.ndarray
    bearings: np.ndarray
    preimage_bearings: np.ndarray
    matched: np.ndarray
    hausdorff: float
    status: str
    predicted_roots: Tuple[float, ...] = ()
    predicted_count: Optional[int] = None
    tol_angle: float = 1e-3

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def transverse(self) -> np.ndarray:
        return self.angles >= self.tol_angle

    @property
    def passed(self) -> bool:
        return (self.status == TRANSVERSE and self.predicted_count is not None
                and self.count == self.predicted_count and bool(np.all(self.matched))
                and bool(np.all(self.transverse)))

    def rows(self) -> List[Tuple[int, float, float, float, float]]:
        return [(k, float(p[0]), float(p[1]), float(a), float(b))
                for k, (p, a, b) in enumerate(zip(self.points, self.angles, self.bearings))]


def _circular_distance(a, b) -> np.ndarray:
    d = np.mod(np.asarray(a) - np.asarray(b), 2.0 * math.pi)
    return np.minimum(d, 2.0 * math.pi - d)


def _smooth_tangents(P: np.ndarray, edges: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Tangent of the closed curve through P at parameter s along each edge.

    Central differences at the two edge vertices, blended linearly.
    """
    T = np.roll(P, -1, axis=0) - np.roll(P, 1, axis=0)
    T /= np.linalg.norm(T, axis=1)[:, None]
    s = np.clip(s, 0.0, 1.0)[:, None]
    return (1.0 - s) * T[edges] + s * np.roll(T, -1, axis=0)[edges]


def count_transverse_intersections(ws: TraceCurve, wu: TraceCurve, S: Union[ScatteringMap, np.ndarray],
                                   tol_angle: float = 1e-3, tol_match: float = 0.1,
                                   tol_overlap: float = 1e-8) -> IntersectionReport:
    """Crossings of w_s and w_u with angles, bearings and the scattering-map prediction."""
    if ws.side != STABLE or wu.side != UNSTABLE:
        raise ValidationError("expected a stable and an unstable trace")
    P, Q = ws.vertices, wu.vertices
    haus = max(directed_hausdorff(P, Q)[0], directed_hausdorff(Q, P)[0])
    A = np.asarray(S.chart_matrix if isinstance(S, ScatteringMap) else S, dtype=float)
    gen = check_genericity(S)
    predicted = gen.roots if gen.classification == GENERIC else ()
    pcount = 4 if gen.classification == GENERIC else None
    if haus <= tol_overlap:
        logger.info("intersections", extra={"status": DEGENERATE_OVERLAP, "hausdorff": haus})
        empty = np.zeros((0, 2))
        return IntersectionReport(empty, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool),
                                  haus, DEGENERATE_OVERLAP, predicted, pcount, tol_angle)

    i, j, _ = _crossing_pairs(P, Q)
    a, b = P[i], np.roll(P, -1, axis=0)[i]
    c, d = Q[j], np.roll(Q, -1, axis=0)[j]
    e1, e2 = b - a, d - c
    cross = e2[:, 0] * (a - c)[:, 1] - e2[:, 1] * (a - c)[:, 0]
    denom = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    s = cross / denom
    pts = a + s[:, None] * e1
    u = ((c - a)[:, 0] * e1[:, 1] - (c - a)[:, 1] * e1[:, 0]) / denom
    tp = _smooth_tangents(P, i, s)
    tq = _smooth_tangents(Q, j, u)
    cosang = np.abs(np.sum(tp * tq, axis=1)) / (np.linalg.norm(tp, axis=1) * np.linalg.norm(tq, axis=1))
    angles = np.arccos(np.clip(cosang, 0.0, 1.0))
    order = np.argsort(np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * math.pi))
    pts, angles = pts[order], angles[order]
    bearings = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * math.pi)
    pre = np.linalg.solve(A, pts.T).T
    pre_bearings = np.mod(np.arctan2(pre[:, 1], pre[:, 0]), 2.0 * math.pi)
    if predicted:
        dist = _circular_distance(pre_bearings[:, None], np.asarray(predicted)[None, :])
        matched = np.min(dist, axis=1) <= tol_match
    else:
        matched = np.zeros(len(pts), dtype=bool)
    report = IntersectionReport(pts, angles, bearings, pre_bearings, matched, haus, TRANSVERSE,
                                predicted, pcount, tol_angle)
    logger.info("intersections", extra={"count": report.count, "predicted": pcount,
                                        "min_angle": float(np.min(angles)) if len(angles) else None})
    if len(angles) and np.min(angles) < tol_angle:
        raise TangencySuspected(f"crossing angle {float(np.min(angles)):.3e} below {tol_angle}")
    return report


def equal_action_defect(ws: TraceCurve, wu: TraceCurve) -> float:
    """|area(w_s) - area(w_u)| / area(w_s)."""
    a_s, a_u = enclosed_action(ws), enclosed_action(wu)
    return abs(a_s - a_u) / a_s


def trace_sigma(model: MapModel, curves: Sequence[KamCurve], sigma: SigmaDisk,
                n_vertices: int = 256) -> List[Tuple[TraceCurve, TraceCurve]]:
    """(w_s, w_u) for each KAM curve, in input order."""
    return [(trace_manifold_on_sigma(model, c, STABLE, sigma, n_vertices),
             trace_manifold_on_sigma(model, c, UNSTABLE, sigma, n_vertices)) for c in curves]
