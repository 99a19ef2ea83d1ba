"""Invariant curves of the fixed point and the discrete homoclinic orbit.

Indexing of the orbit: q_0 = q+, q_-1 = q- (the gluing index),
q_n = f^n(q+) for n >= 1 and q_-k = f^-(k-1)(q-) for k >= 2.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple
import logging

import numpy as np
from scipy.spatial import cKDTree

from .errors import DecayFitFailure, DomainEscape, NeverSettles, ValidationError
from .fixed_point_analysis import classify_spectrum, find_fixed_point
from .model_zoo import MapModel
from .symplectic_core import invert

logger = logging.getLogger("homoclinickit.homoclinic")

SIDES = ("stable", "unstable")


# -- polyline geometry -----------------------------------------------------

def _segment_distance(p0, p1, q0, q1) -> Tuple[float, np.ndarray, np.ndarray]:
    """Distance between segments [p0, p1] and [q0, q1] with closest points."""
    d1, d2, r = p1 - p0, q1 - q0, p0 - q0
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    if a <= 1e-300 and e <= 1e-300:
        return float(np.linalg.norm(r)), p0, q0
    if a <= 1e-300:
        s, t = 0.0, float(np.clip(f / e, 0.0, 1.0))
    else:
        c = d1 @ r
        if e <= 1e-300:
            s, t = float(np.clip(-c / a, 0.0, 1.0)), 0.0
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = float(np.clip((b * f - c * e) / denom, 0.0, 1.0)) if denom > 1e-300 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, float(np.clip(-c / a, 0.0, 1.0))
            elif t > 1.0:
                t, s = 1.0, float(np.clip((b - c) / a, 0.0, 1.0))
    cp, cq = p0 + s * d1, q0 + t * d2
    return float(np.linalg.norm(cp - cq)), cp, cq


def _closest_between(P: np.ndarray, Q: np.ndarray, k: int = 4):
    """Minimal distance between polylines P and Q (checked near vertex neighbours)."""
    tree = cKDTree(Q)
    kk = min(k, len(Q))
    _, nbrs = tree.query(P, k=kk)
    nbrs = np.asarray(nbrs).reshape(len(P), kk)
    best = (np.inf, None, None)
    for i in range(len(P)):
        p_segs = [(P[i], P[i])]
        if i + 1 < len(P):
            p_segs.append((P[i], P[i + 1]))
        for j in nbrs[i]:
            for jj in (j - 1, j):
                if jj < 0 or jj + 1 >= len(Q):
                    continue
                for p0, p1 in p_segs:
                    cand = _segment_distance(p0, p1, Q[jj], Q[jj + 1])
                    if cand[0] < best[0]:
                        best = cand
    return best


# -- invariant curves ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InvariantCurve1D:
    """Sampled branch of W^s(p) or W^u(p), ordered away from p."""
    side: str
    points: np.ndarray
    arclength: np.ndarray
    fundamental_domain: Tuple[float, float]
    direction: np.ndarray
    fixed_point: np.ndarray
    fundamental_gap: float = 0.0
    invariance_error: float = 0.0

    @property
    def axis_deviation(self) -> float:
        """Largest distance of the samples from the eigendirection line."""
        rel = self.points - self.fixed_point
        along = rel @ self.direction
        return float(np.max(np.linalg.norm(rel - np.outer(along, self.direction), axis=1)))

    def mapped(self, fmap) -> np.ndarray:
        """Image of all samples under ``fmap`` (a SmoothMap4 or a step function)."""
        return np.asarray(fmap(self.points))


def _oriented(vec) -> np.ndarray:
    e = np.real(np.asarray(vec, dtype=float))
    e = e / np.linalg.norm(e)
    return e if e[np.argmax(np.abs(e))] > 0 else -e


def continue_manifold_curve(model: MapModel, side: str, length: float, delta: float = 1e-3,
                            n_fund: int = 64, tol_mfld: float = 1e-10,
                            max_rounds: int = 2000) -> InvariantCurve1D:
    """Grow one branch of a local invariant curve by iterating a fundamental domain.

    The unstable side uses f, the stable side f^-1, starting from samples of
    the linear eigendirection between delta and delta/mu.
    """
    if side not in SIDES:
        raise ValidationError(f"side must be one of {SIDES}, got {side!r}")
    if length <= delta:
        raise ValidationError("curve length must exceed the fundamental-domain offset")
    fmap = model.local
    p = find_fixed_point(fmap, np.zeros(4))
    spec = classify_spectrum(fmap.jac(p))
    e = _oriented(spec.basis[:, 1] if side == "unstable" else spec.basis[:, 0])
    mu = spec.mu

    step = fmap.evaluate if side == "unstable" else (lambda q: invert(fmap, q))
    s = delta * mu ** (-np.arange(n_fund) / n_fund)
    block = p + np.outer(s, e)
    blocks = [p[None, :]]
    rounds = 0
    while True:
        within = np.linalg.norm(block - p, axis=1) <= length
        part = block[within]
        if not np.all(fmap.domain.contains(part, fmap.margin)):
            raise DomainEscape(f"{side} curve left the domain before reaching length {length}")
        blocks.append(part)
        if not np.all(within):
            break
        rounds += 1
        if rounds > max_rounds:
            raise DomainEscape(f"{side} curve did not reach length {length} in {max_rounds} rounds")
        block = step(block)

    pts = np.vstack(blocks)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])

    next_start = p + (delta / mu) * e
    gap = float(np.linalg.norm(step((p + delta * e)[None, :])[0] - next_start))
    images = step(pts[1:-1])
    inside = np.linalg.norm(images - p, axis=1) <= np.linalg.norm(pts[-1] - p)
    inv_err = 0.0
    if np.any(inside):
        tree = cKDTree(pts)
        for q in images[inside]:
            _, j = tree.query(q)
            inv_err = max(inv_err, min(
                _segment_distance(q, q, pts[jj], pts[jj + 1])[0]
                for jj in (j - 1, j) if 0 <= jj < len(pts) - 1
            ))
    if inv_err > tol_mfld:
        logger.warning("manifold_invariance", extra={"side": side, "error": inv_err})
    logger.debug("manifold_curve", extra={"side": side, "samples": len(pts), "rounds": rounds})
    return InvariantCurve1D(side, pts, arc, (delta, delta / mu), e, p, gap, inv_err)


# -- homoclinic orbit -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class HomoclinicOrbit:
    """Orbit points q_n for n in [-n_max, n_max] with a geometric decay bound."""
    indices: np.ndarray
    points: np.ndarray
    fixed_point: np.ndarray
    decay_C: float
    mu1: float
    rate_forward: float
    rate_backward: float
    gluing_index: int = -1
    step_error: float = 0.0
    settle_index: Optional[int] = None

    @property
    def n_max(self) -> int:
        return int(self.indices[-1])

    def point(self, n: int) -> np.ndarray:
        return self.points[n + self.n_max]

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.points - self.fixed_point, axis=1)

    def decay_bound(self, n) -> np.ndarray:
        return self.decay_C * self.mu1 ** np.abs(np.asarray(n))

    def with_settle_index(self, N: int) -> "HomoclinicOrbit":
        return replace(self, settle_index=int(N))


def _fit_rate(ns: np.ndarray, r: np.ndarray) -> float:
    half = ns[len(ns) // 2:]
    rr = r[len(ns) // 2:]
    ok = rr > 0.0
    if np.count_nonzero(ok) < 2:
        return 0.0
    slope = np.polyfit(half[ok].astype(float), np.log(rr[ok]), 1)[0]
    return float(np.exp(slope))


def assemble_homoclinic_orbit(model: MapModel, n_max: int) -> HomoclinicOrbit:
    """Iterate q+ forward and q- backward to build the doubly infinite orbit."""
    if n_max < 2:
        raise ValidationError("n_max must be at least 2")
    local = model.local
    p = find_fixed_point(local, np.zeros(4))
    fwd = [model.q_plus]
    for _ in range(n_max):
        fwd.append(local(fwd[-1]))
    bwd = [model.q_minus]
    for _ in range(n_max - 1):
        bwd.append(invert(local, bwd[-1]))
    pts = np.vstack([np.array(bwd[::-1]), np.array(fwd)])
    if not np.all(local.domain.contains(pts, local.margin)):
        raise DomainEscape(f"homoclinic orbit leaves the domain for n_max = {n_max}")
    indices = np.arange(-n_max, n_max + 1)
    step_error = float(np.max(np.abs(model.step(pts[:-1]) - pts[1:])))

    r = np.linalg.norm(pts - p, axis=1)
    ns = np.arange(1, n_max + 1)
    rate_f = _fit_rate(ns, r[n_max + 1:])
    rate_b = _fit_rate(ns, r[:n_max][::-1])
    mu1 = max(rate_f, rate_b)
    if not (0.0 < mu1 < 1.0) or not np.isfinite(mu1):
        raise DecayFitFailure(f"orbit tails do not decay geometrically (fitted rate {mu1})")
    nz = indices != 0
    C = float(max(r[n_max], np.max(r[nz] / mu1 ** np.abs(indices[nz]))))
    logger.info("homoclinic_orbit", extra={"n_max": n_max, "mu1": mu1, "C": C, "step_error": step_error})
    return HomoclinicOrbit(indices, pts, p, C, mu1, rate_f, rate_b, -1, step_error)


def choose_settle_index(orbit: HomoclinicOrbit, V_radius: float) -> int:
    """Smallest N with ||q_n - p|| <= V_radius for every |n| >= N."""
    r = orbit.distances()
    outside = np.abs(orbit.indices[r > V_radius])
    N = 0 if outside.size == 0 else int(np.max(outside)) + 1
    if N > orbit.n_max:
        raise NeverSettles(f"orbit does not settle within radius {V_radius} by n_max = {orbit.n_max}")
    return N


# -- diagnostics ----------------------------------------------------------

@dataclass(frozen=True)
class HomoclinicScan:
    min_distance: float
    unstable_point: Optional[np.ndarray] = field(default=None, compare=False)
    stable_point: Optional[np.ndarray] = field(default=None, compare=False)
    threshold: float = 1e-8

    @property
    def found(self) -> bool:
        return self.min_distance <= self.threshold


def homoclinic_distance(unstable: np.ndarray, stable: np.ndarray, threshold: float = 1e-8,
                        exclude: Optional[np.ndarray] = None, exclude_radius: float = 1e-2) -> HomoclinicScan:
    """Minimal distance between two sampled curves, ignoring a ball around ``exclude``.

    A minimum above ``threshold`` means no homoclinic point was found.
    """
    U, S = np.asarray(unstable, dtype=float), np.asarray(stable, dtype=float)
    if exclude is not None:
        U = U[np.linalg.norm(U - exclude, axis=1) > exclude_radius]
        S = S[np.linalg.norm(S - exclude, axis=1) > exclude_radius]
    if len(U) == 0 or len(S) == 0:
        return HomoclinicScan(np.inf, None, None, threshold)
    d, cu, cs = _closest_between(U, S)
    logger.debug("homoclinic_scan", extra={"min_distance": d})
    return HomoclinicScan(d, cu, cs, threshold)


def orbit_rows(orbit: HomoclinicOrbit) -> List[Tuple[int, float, float, float, float]]:
    """Rows (n, x, y, u, v) for CSV export."""
    return [(int(n), *map(float, q)) for n, q in zip(orbit.indices, orbit.points)]
