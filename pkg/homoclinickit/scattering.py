"""Linearization along the homoclinic orbit and the linear scattering map.

Tangent vectors are written in the spectral basis B of the fixed point, so the
limit of the linearization is blockdiag(diag(mu, 1/mu), R_theta). In the
rotating frame zeta_n = S_n psi_n, S_n = blockdiag(I, R_{(n - ref) theta}), the
difference system reads

    xi_{n+1}  = mu xi_n      + F_n psi_n
    eta_{n+1} = eta_n / mu   + G_n psi_n
    chi_{n+1} = chi_n        + H_n psi_n

Bounded solutions on n >= N and n <= -N are computed as fixed points of the
summed form of this system.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DecayFitFailure,
    NoContraction,
    NonSymplecticJacobian,
    TransversalityFailure,
    ValidationError,
)
from .fixed_point_analysis import Spectrum1Elliptic, classify_spectrum
from .homoclinic import HomoclinicOrbit
from .model_zoo import MapModel
from .symplectic_core import (
    DEFAULT_TOL_SYMP,
    BlockIdentityReport,
    canonical_blocks,
    check_symplectic_block_identities,
    rotation,
    symplectic_residual,
)

logger = logging.getLogger("homoclinickit.scattering")

FORWARD = "forward"
BACKWARD = "backward"


# -- linearization ----------------------------------------------------------

def _inf_norm(blocks: np.ndarray) -> np.ndarray:
    """Max-abs row sum of a stack of matrices."""
    return np.max(np.sum(np.abs(blocks), axis=-1), axis=-1)


def coupling_decay_base(rate_fit: float, mu: float) -> float:
    """Decay base mu1 in (mu, 1) for the coupling blocks."""
    base = max(rate_fit, mu)
    return min(base * 1.05, 0.5 * (1.0 + base))


@dataclass(frozen=True, eq=False)
class LinearizationSequence:
    """L_n = Df(q_n) for n in [-n_max, n_max] with coupling blocks.

    ``P``, ``Q``, ``W`` are the rows of B^-1 L_n B minus the limit matrix.
    ``F``, ``G``, ``H`` are filled in by :func:`derotate`.
    """
    indices: np.ndarray
    L: np.ndarray
    Lt: np.ndarray
    spectrum: Spectrum1Elliptic
    mu1: float
    P: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    F: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    reference: Optional[int] = None

    @classmethod
    def from_spectral(cls, indices, L, spectrum: Spectrum1Elliptic, rate_fit: float) -> "LinearizationSequence":
        L = np.asarray(L, dtype=float)
        B = spectrum.basis
        Lt = np.linalg.inv(B) @ L @ B
        K = Lt - spectrum.normal_block
        mu1 = coupling_decay_base(rate_fit, spectrum.mu)
        return cls(np.asarray(indices), L, Lt, spectrum, mu1, K[:, 0, :], K[:, 1, :], K[:, 2:, :])

    @property
    def mu(self) -> float:
        return self.spectrum.mu

    @property
    def theta(self) -> float:
        """Signed rotation angle of the limit center block."""
        return self.spectrum.krein * self.spectrum.alpha

    @property
    def kappa(self) -> float:
        return max(self.mu, self.mu1)

    @property
    def n_max(self) -> int:
        return int(self.indices[-1])

    @property
    def derotated(self) -> bool:
        return self.reference is not None

    @property
    def limit(self) -> np.ndarray:
        return self.spectrum.normal_block

    def pos(self, n: int) -> int:
        return int(n) + self.n_max

    def frame(self, n: int) -> np.ndarray:
        """S_n = blockdiag(I, R_{(n - ref) theta})."""
        S = np.eye(4)
        S[2:, 2:] = rotation((n - (self.reference or 0)) * self.theta)
        return S

    def coupling(self) -> np.ndarray:
        """Stacked coupling rows (K, 4, 4): [F; G; H] if derotated, else [P; Q; W]."""
        if self.derotated:
            return np.concatenate([self.F[:, None, :], self.G[:, None, :], self.H], axis=1)
        return np.concatenate([self.P[:, None, :], self.Q[:, None, :], self.W], axis=1)

    def coupling_norms(self) -> np.ndarray:
        return _inf_norm(self.coupling())

    def decay_constant(self, N: int = 0) -> float:
        """sup ||K_n|| / mu1^|n| over |n| >= N."""
        sel = np.abs(self.indices) >= N
        if not np.any(sel):
            return 0.0
        norms = self.coupling_norms()[sel]
        return float(np.max(norms / self.mu1 ** np.abs(self.indices[sel])))


def _tail_rate(norms: np.ndarray) -> float:
    half = norms[len(norms) // 2:]
    ok = half > 1e-300
    if np.count_nonzero(ok) < 2:
        return 0.0
    ns = np.arange(len(norms))[len(norms) // 2:][ok]
    return float(np.exp(np.polyfit(ns.astype(float), np.log(half[ok]), 1)[0]))


def linearize_along_orbit(model: MapModel, orbit: HomoclinicOrbit,
                          tol_symp: float = DEFAULT_TOL_SYMP) -> LinearizationSequence:
    """Jacobians of the first-return map along the orbit, in the spectral basis."""
    L = model.step_jacobian(orbit.points)
    res = symplectic_residual(L) / (1.0 + np.max(np.abs(L), axis=(-2, -1)) ** 2)
    if np.max(res) > tol_symp:
        bad = int(orbit.indices[np.argmax(res)])
        raise NonSymplecticJacobian(f"Jacobian at orbit index {bad} has residual {np.max(res):.3e}")
    spectrum = classify_spectrum(model.local.jac(orbit.fixed_point))
    seq = LinearizationSequence.from_spectral(orbit.indices, L, spectrum, orbit.mu1)

    norms = seq.coupling_norms()
    n_max = orbit.n_max
    for tail in (norms[n_max + 1:], norms[:n_max][::-1]):
        rate = _tail_rate(tail)
        if not math.isfinite(rate) or rate >= 1.0:
            raise DecayFitFailure(f"coupling blocks do not decay (fitted tail rate {rate:.4f})")
    logger.info("linearization", extra={"n_max": n_max, "mu1": seq.mu1, "C": seq.decay_constant(1)})
    return seq


def derotate(seq: LinearizationSequence, reference: int = 0) -> LinearizationSequence:
    """Pass to the rotating frame; a sequence that is already derotated is returned as is."""
    if seq.derotated:
        return seq
    theta = seq.theta
    ks = seq.indices - reference
    S = np.zeros((len(ks), 4, 4))
    S[:, 0, 0] = S[:, 1, 1] = 1.0
    S[:, 2:, 2:] = rotation(ks * theta)
    F = np.einsum("nj,njk->nk", seq.P, S)
    G = np.einsum("nj,njk->nk", seq.Q, S)
    H = rotation(-(ks + 1) * theta) @ seq.W @ S
    return replace(seq, F=F, G=G, H=H, reference=reference)


# -- boundary value problem ------------------------------------------------

@dataclass(frozen=True)
class BvpBoundaryData:
    """Boundary data at index N (forward) or -N (backward).

    ``value`` is xi at N for the forward problem and eta at -N for the
    backward one; ``chi`` is the asymptotic center limit.
    """
    value: float
    chi: Tuple[float, float]
    direction: str = FORWARD
    N: int = 1

    def __post_init__(self):
        chi = tuple(float(c) for c in self.chi)
        if len(chi) != 2 or not all(math.isfinite(c) for c in chi) or not math.isfinite(self.value):
            raise ValidationError("boundary data must be finite with a 2-vector chi")
        if self.direction not in (FORWARD, BACKWARD):
            raise ValidationError(f"direction must be forward or backward, got {self.direction!r}")
        if self.N < 0:
            raise ValidationError("N must be non-negative")
        object.__setattr__(self, "chi", chi)


@dataclass(frozen=True, eq=False)
class BoundedSeqSolution:
    """Truncated bounded solution psi_n = (xi, eta, chi) in the rotating frame."""
    indices: np.ndarray
    psi: np.ndarray
    data: BvpBoundaryData
    T: int
    residual: float
    tail_bound: float
    lipschitz: float
    iterations: int
    corrections: Tuple[float, ...]
    converged: bool
    frames: np.ndarray = field(repr=False, default=None)

    def at(self, n: int) -> np.ndarray:
        return self.psi[int(n) - int(self.indices[0])]

    def spectral(self, n: int) -> np.ndarray:
        """S_n psi_n: the solution in spectral coordinates before derotation."""
        k = int(n) - int(self.indices[0])
        return self.frames[k] @ self.psi[k]

    @property
    def xi(self) -> np.ndarray:
        return self.psi[:, 0]

    @property
    def eta(self) -> np.ndarray:
        return self.psi[:, 1]

    @property
    def chi(self) -> np.ndarray:
        return self.psi[:, 2:]


def lipschitz_estimate(C: float, kappa: float, N: int, T: int) -> float:
    """Bound on the Lipschitz constant of the summed-system operator."""
    ns = np.arange(N, N + T + 1)
    ramp = float(np.max(kappa ** (ns - 1.0) * (ns - N))) if T > 0 else 0.0
    return C * max(ramp, kappa ** (N + 1) / (1.0 - kappa * kappa), kappa ** N / (1.0 - kappa))


def adaptive_T(C: float, kappa: float, tol_bvp: float, cap: int, T_min: int = 8) -> int:
    """Smallest T >= T_min with C kappa^T < tol_bvp / 10, capped."""
    if C <= 0.0:
        return min(T_min, cap)
    T = int(math.ceil(math.log(tol_bvp / (10.0 * C)) / math.log(kappa)))
    return int(min(max(T, T_min), cap))


def _sweep_forward(K, psi, ls, lu, data):
    k = np.einsum("nij,nj->ni", K, psi)
    out = np.empty_like(psi)
    m = len(psi)
    out[0, 0] = data.value
    for j in range(m - 1):
        out[j + 1, 0] = ls * out[j, 0] + k[j, 0]
    eta = 0.0
    for j in range(m - 1, -1, -1):
        eta = (eta - k[j, 1]) / lu
        out[j, 1] = eta
    tail = np.cumsum(k[::-1, 2:], axis=0)[::-1]
    out[:, 2:] = np.asarray(data.chi) - tail
    return out


def _sweep_backward(K, psi, ls, lu, data):
    k = np.einsum("nij,nj->ni", K, psi)
    out = np.empty_like(psi)
    m = len(psi)
    out[0, 0] = 0.0
    for j in range(m - 1):
        out[j + 1, 0] = ls * out[j, 0] + k[j, 0]
    out[m - 1, 1] = data.value
    for j in range(m - 2, -1, -1):
        out[j, 1] = (out[j + 1, 1] - k[j, 1]) / lu
    out[0, 2:] = data.chi
    out[1:, 2:] = np.asarray(data.chi) + np.cumsum(k[:-1, 2:], axis=0)
    return out


def solve_bvp(seq: LinearizationSequence, data: BvpBoundaryData, T: Optional[int] = None,
              tol_bvp: float = 1e-10, max_iter: int = 500) -> BoundedSeqSolution:
    """Bounded solution with boundary data ``data`` by contraction iteration."""
    if not seq.derotated:
        raise ValidationError("solve_bvp needs a derotated sequence")
    N = data.N
    C = seq.decay_constant(N)
    kappa = seq.kappa
    cap = seq.n_max - N
    if cap < 1:
        raise ValidationError(f"N = {N} leaves no room in an orbit with n_max = {seq.n_max}")
    if T is None:
        T = adaptive_T(C, kappa, tol_bvp, cap)
    if T > cap:
        raise ValidationError(f"N + T = {N + T} exceeds n_max = {seq.n_max}")
    lip = lipschitz_estimate(C, kappa, N, T)
    if lip >= 1.0:
        raise NoContraction(f"Lipschitz estimate {lip:.3f} >= 1 at N = {N}; increase N")

    sign = float(seq.spectrum.orientation)
    ls, lu = sign * seq.mu, sign / seq.mu
    if data.direction == FORWARD:
        idx = np.arange(N, N + T + 1)
        sweep = _sweep_forward
    else:
        idx = np.arange(-N - T, -N + 1)
        sweep = _sweep_backward
    K = seq.coupling()[idx + seq.n_max]

    psi = sweep(np.zeros_like(K), np.zeros((len(idx), 4)), ls, lu, data)
    corrections: List[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = sweep(K, psi, ls, lu, data)
        corr = float(np.max(np.abs(new - psi)))
        corrections.append(corr)
        psi = new
        logger.debug("bvp_iteration", extra={"iteration": it, "correction": corr})
        if corr <= 1e-15 * (1.0 + float(np.max(np.abs(psi)))):
            converged = True
            break

    lam = np.diag([ls, lu, 1.0, 1.0])
    step = psi[1:] - psi[:-1] @ lam.T - np.einsum("nij,nj->ni", K[:-1], psi[:-1])
    residual = float(np.max(np.abs(step))) if len(step) else 0.0
    tail = C * kappa ** (N + T) / (1.0 - kappa)
    frames = np.stack([seq.frame(n) for n in idx])
    if residual > tol_bvp:
        logger.warning("bvp_residual", extra={"residual": residual, "N": N, "T": T})
    return BoundedSeqSolution(idx, psi, data, T, residual, tail, lip, it,
                              tuple(corrections), converged, frames)


@dataclass(frozen=True)
class LinearityReport:
    """Max violations of the superposition relations."""
    split: float
    homogeneity: float
    additivity: float
    samples: int
    tol_lin: float = 1e-10

    @property
    def max_violation(self) -> float:
        return max(self.split, self.homogeneity, self.additivity)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol_lin


def verify_linearity(seq: LinearizationSequence, N: int, samples: int = 100, T: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None, tol_lin: float = 1e-10) -> LinearityReport:
    """Check superposition of bounded solutions over random boundary data.

    split:       psi(v, c) = psi(v, 0) + psi(0, c)
    homogeneity: psi(s v, s c) = s psi(v, c)
    additivity:  psi(v' + v'', c' + c'') = psi(v', c') + psi(v'', c'')
    """
    rng = rng or np.random.default_rng(0)
    split = homog = addit = 0.0

    def sol(v, c, direction):
        return solve_bvp(seq, BvpBoundaryData(float(v), tuple(c), direction, N), T).psi

    for k in range(samples):
        direction = FORWARD if k % 2 == 0 else BACKWARD
        v1, v2, s = rng.normal(size=3)
        c1, c2 = rng.normal(size=2), rng.normal(size=2)
        full = sol(v1, c1, direction)
        split = max(split, float(np.max(np.abs(full - sol(v1, (0.0, 0.0), direction) - sol(0.0, c1, direction)))))
        homog = max(homog, float(np.max(np.abs(sol(s * v1, s * c1, direction) - s * full))))
        other = sol(v2, c2, direction)
        addit = max(addit, float(np.max(np.abs(sol(v1 + v2, c1 + c2, direction) - full - other))))
    return LinearityReport(split, homog, addit, samples, tol_lin)


# -- scattering map -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScatteringMap:
    """2x2 matrix of the linear scattering map on the center tangent plane.

    ``matrix`` is co-rotating at indices +-N; ``chart_matrix`` maps the center
    plane at q- to the center plane at q+ in (u, v) coordinates.
    """
    matrix: np.ndarray
    chart_matrix: np.ndarray
    N: int
    T: int
    derotated_matrix: np.ndarray
    det_residual: float
    system_det: float
    frame: str = "co-rotating at +-N"

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


def _transport(seq: LinearizationSequence, N: int) -> np.ndarray:
    """S_N^-1 Lt_{N-1} ... Lt_{-N} S_{-N}."""
    prod = np.eye(4)
    for n in range(-N, N):
        prod = seq.Lt[seq.pos(n)] @ prod
    return np.linalg.solve(seq.frame(N), prod @ seq.frame(-N))


def build_scattering_map(model: MapModel, orbit: HomoclinicOrbit, N: int, T: Optional[int] = None,
                         tol_trans: float = 1e-8, tol_symp: float = 1e-8,
                         seq: Optional[LinearizationSequence] = None) -> ScatteringMap:
    """Intersect the transported backward bounded lines with the forward bounded subspace."""
    if seq is None:
        seq = linearize_along_orbit(model, orbit)
    seq = derotate(seq)
    if T is None:
        T = adaptive_T(seq.decay_constant(N), seq.kappa, 1e-10, seq.n_max - N)

    def fwd(v, c):
        return solve_bvp(seq, BvpBoundaryData(v, c, FORWARD, N), T).at(N)

    def bwd(v, c):
        return solve_bvp(seq, BvpBoundaryData(v, c, BACKWARD, N), T).at(-N)

    f0, f1, f2 = fwd(1.0, (0.0, 0.0)), fwd(0.0, (1.0, 0.0)), fwd(0.0, (0.0, 1.0))
    b0 = bwd(1.0, (0.0, 0.0))
    Ld = _transport(seq, N)
    system = np.column_stack([Ld @ b0, -f0, -f1, -f2])
    unit = system / np.linalg.norm(system, axis=0)
    sdet = float(np.linalg.det(unit))
    if abs(sdet) <= tol_trans:
        raise TransversalityFailure(f"transported line is tangent to the forward bounded subspace (det {sdet:.3e})")

    A0 = np.zeros((2, 2))
    for k, e in enumerate(((1.0, 0.0), (0.0, 1.0))):
        sol = np.linalg.solve(system, -Ld @ bwd(0.0, e))
        A0[:, k] = sol[2:]
    R = rotation(N * seq.theta)
    matrix = R @ A0 @ R
    Pc = seq.spectrum.basis[2:, 2:]
    chart = Pc @ A0 @ rotation(seq.theta) @ np.linalg.inv(Pc)
    det_res = abs(float(np.linalg.det(A0)) - 1.0)
    if det_res > tol_symp:
        logger.warning("scattering_det", extra={"det_residual": det_res, "N": N})
    logger.info("scattering_map", extra={"N": N, "T": T, "det_residual": det_res})
    return ScatteringMap(matrix, chart, N, T, A0, det_res, sdet)


# -- transversality -------------------------------------------------------

@dataclass(frozen=True)
class TransversalityReport:
    d11: float
    tangent_sine: float
    delta: float
    identities: BlockIdentityReport
    tol_trans: float = 1e-8

    @property
    def delta_residual(self) -> float:
        return abs(self.delta - self.d11 ** 2)

    @property
    def passed(self) -> bool:
        return (abs(self.d11) > self.tol_trans
                and self.delta_residual <= 1e-8 * (1.0 + self.d11 ** 2))


def orbit_transfer_matrix(model: MapModel, orbit: HomoclinicOrbit, N: int) -> np.ndarray:
    """L = Df^{2N} at q_-N."""
    if N < 1 or N > orbit.n_max:
        raise ValidationError(f"N must lie in [1, {orbit.n_max}]")
    L = np.eye(4)
    for n in range(-N, N):
        L = model.step_jacobian(orbit.point(n)) @ L
    return L


_FRAME_SEED = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 3)))[0]


def tangent_frames(model: MapModel, orbit: HomoclinicOrbit, N: int) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal 3-frames of T W^cu and T W^cs at q_N.

    A fixed generic frame is carried forward from q_-n_max (backward from
    q_n_max) and re-orthonormalized at every step.
    """
    cu = _FRAME_SEED
    for n in range(-orbit.n_max, N):
        cu = np.linalg.qr(model.step_jacobian(orbit.point(n)) @ cu)[0]
    cs = _FRAME_SEED
    for n in range(orbit.n_max - 1, N - 1, -1):
        cs = np.linalg.qr(np.linalg.solve(model.step_jacobian(orbit.point(n)), cs))[0]
    return cu, cs


def tangent_space_sine(cu: np.ndarray, cs: np.ndarray) -> float:
    """Sine of the angle between two 3-planes of R^4; zero when they coincide."""
    normal = np.linalg.svd(cs, full_matrices=True)[0][:, 3]
    return float(np.linalg.norm(cu.T @ normal))


def check_transversality(model: MapModel, orbit: HomoclinicOrbit, N: int,
                         tol_trans: float = 1e-8) -> TransversalityReport:
    """d11, the tangent-space angle at q_N and the block expression Delta (= d11^2 when symplectic)."""
    L = orbit_transfer_matrix(model, orbit, N)
    a, b, c, d = canonical_blocks(L)
    sine = tangent_space_sine(*tangent_frames(model, orbit, N))
    d11, d12, d21, d22 = d[0, 0], d[0, 1], d[1, 0], d[1, 1]
    a22, b21, b22, c12, c22 = a[1, 1], b[1, 0], b[1, 1], c[0, 1], c[1, 1]
    delta = ((d11 * a22 - b21 * c12) * (d22 * d11 - d21 * d12)
             - (b22 * d11 - b21 * d12) * (d11 * c22 - d21 * c12))
    ident = check_symplectic_block_identities(L, tol=1e-10 * (1.0 + float(np.max(np.abs(L)))) ** 2)
    report = TransversalityReport(float(d11), sine, float(delta), ident, tol_trans)
    logger.info("transversality", extra={"d11": report.d11, "tangent_sine": sine, "delta": report.delta, "N": N})
    if not report.passed:
        raise TransversalityFailure(
            f"d11 = {report.d11:.3e}, Delta - d11^2 = {report.delta - report.d11 ** 2:.3e}"
        )
    return report


# -- genericity -----------------------------------------------------------

GENERIC = "generic"
DEGENERATE_ROTATION = "degenerate-rotation"
NEAR_DEGENERATE = "near-degenerate"


@dataclass(frozen=True, eq=False)
class GenericityReport:
    """Zeros of rho(theta) = |A (cos theta, sin theta)|^2 - 1."""
    classification: str
    roots: Tuple[float, ...]
    derivatives: Tuple[float, ...]
    min_angle: float
    max_abs_residual: float
    matrix: np.ndarray

    def rho(self, theta) -> np.ndarray:
        return _rho(self.matrix, theta)


def _rho(A, theta):
    th = np.asarray(theta, dtype=float)
    pts = np.stack([np.cos(th), np.sin(th)], axis=-1) @ np.asarray(A).T
    return np.sum(pts * pts, axis=-1) - 1.0


def _drho(A, theta):
    th = np.asarray(theta, dtype=float)
    p = np.stack([np.cos(th), np.sin(th)], axis=-1) @ np.asarray(A).T
    dp = np.stack([-np.sin(th), np.cos(th)], axis=-1) @ np.asarray(A).T
    return 2.0 * np.sum(p * dp, axis=-1)


def _crossing_angle(A, theta) -> float:
    """Angle between the unit circle and its image under A at A(cos, sin)."""
    p = A @ np.array([math.cos(theta), math.sin(theta)])
    t_img = A @ np.array([-math.sin(theta), math.cos(theta)])
    t_circ = np.array([-p[1], p[0]])
    cosang = abs(t_img @ t_circ) / (np.linalg.norm(t_img) * np.linalg.norm(t_circ))
    return float(math.acos(min(1.0, cosang)))


def check_genericity(S: Union[ScatteringMap, np.ndarray], samples: int = 4096,
                     tol_root: float = 1e-6, tol_flat: float = 1e-12) -> GenericityReport:
    """Classify the intersection of the unit circle with its image."""
    A = np.asarray(S.chart_matrix if isinstance(S, ScatteringMap) else S, dtype=float)
    if A.shape != (2, 2):
        raise ValidationError("genericity check needs a 2x2 matrix")
    grid = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    vals = _rho(A, grid)
    max_abs = float(np.max(np.abs(vals)))
    if max_abs <= tol_flat:
        return GenericityReport(DEGENERATE_ROTATION, (), (), 0.0, max_abs, A)

    roots = []
    nxt = np.roll(vals, -1)
    for i in np.where(np.sign(vals) != np.sign(nxt))[0]:
        if nxt[i] == 0.0:
            continue
        lo, hi = grid[i], grid[i] + 2.0 * math.pi / samples
        if vals[i] == 0.0:
            roots.append(float(lo))
            continue
        roots.append(float(brentq(lambda t: float(_rho(A, t)), lo, hi, xtol=1e-12)) % (2.0 * math.pi))
    roots = sorted(set(roots))
    derivs = tuple(float(_drho(A, t)) for t in roots)
    simple = all(abs(d) > tol_root for d in derivs)
    cls = GENERIC if len(roots) == 4 and simple else NEAR_DEGENERATE
    angle = min((_crossing_angle(A, t) for t in roots), default=0.0)
    logger.debug("genericity", extra={"classification": cls, "roots": roots})
    return GenericityReport(cls, tuple(roots), derivs, angle, max_abs, A)


# -- stabilization in N -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class StabilityReport:
    Ns: Tuple[int, ...]
    charts: Tuple[np.ndarray, ...]
    differences: Tuple[float, ...]
    classifications: Tuple[str, ...]


def scattering_stability(model: MapModel, orbit: HomoclinicOrbit, Ns: Sequence[int],
                         T: Optional[int] = None) -> StabilityReport:
    """Chart matrices for a range of N and their successive differences."""
    seq = derotate(linearize_along_orbit(model, orbit))
    maps = [build_scattering_map(model, orbit, int(N), T, seq=seq) for N in Ns]
    charts = tuple(m.chart_matrix for m in maps)
    diffs = tuple(float(np.max(np.abs(b - a))) for a, b in zip(charts, charts[1:]))
    classes = tuple(check_genericity(m).classification for m in maps)
    return StabilityReport(tuple(int(N) for N in Ns), charts, diffs, classes)
