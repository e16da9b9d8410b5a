"""Slow-manifold geometry and concentration tubes.

The slow manifold is the root x*(z_c, z_d) of the reduced fast drift
F(z_c, x_bar, z_d) (algebraic constraints eliminated).  Attraction is
decided by the eigenvalues of dF/dx_bar at the root.  A first-order
correction

    l* = x* + epsilon * (dF/dx_bar)^{-1} (dx*/dz_c) H_c

accounts for the slow drift of the manifold; substituting l* into the fast
equation leaves a residual of order epsilon**2.

Around l*, fluctuations of the stochastic system concentrate in an
ellipsoidal tube whose cross-section L solves the algebraic Lyapunov
equation

    A L + L A^T + D = 0,   A = dF/dx_bar at l*,
    D = blockdiag(kappa * I_{n_x}, I_{n_w}),

kappa being a small regularization for the noise-free device rows.  The
probability of leaving the tube of depth h decays like exp(-h^2 / (2 sigma^2))
with an algebraic prefactor in h and the horizon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .errors import (
    ConvergenceError,
    DegenerateFitError,
    NumericalError,
    ParameterError,
)
from .model import SlowFastState, SystemModel
from .solver import Trajectory

__all__ = [
    "SlowManifoldPoint",
    "StabilityReport",
    "Tube",
    "TheoremBoundParams",
    "solve_slow_manifold",
    "verify_uniform_stability",
    "invariant_manifold_correction",
    "solve_cross_section",
    "build_tube",
    "tube_distance",
    "in_tube",
    "theorem_bound",
    "fit_bound_constant",
    "manifold_distance_along",
]

MARGIN_TOL = 1e-6
LYAPUNOV_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SlowManifoldPoint:
    """A root of the reduced fast drift at frozen slow/discrete variables."""

    z_c: np.ndarray
    z_d: np.ndarray
    x_star: np.ndarray
    y_bar: np.ndarray
    eigenvalues: np.ndarray
    margin: float  # max real part of the fast Jacobian spectrum
    stability: str  # "stable" | "marginal" | "unstable"
    residual: float


@dataclass
class StabilityReport:
    points: list
    failures: list
    all_stable: bool | None
    worst_margin: float | None


def _classify(margin: float, margin_tol: float) -> str:
    if margin < -margin_tol:
        return "stable"
    if abs(margin) <= margin_tol:
        return "marginal"
    return "unstable"


def solve_slow_manifold(
    model: SystemModel,
    z_c,
    z_d=None,
    guess=None,
    y_guess=None,
    tol: float = 1e-10,
    max_iter: int = 50,
    margin_tol: float = MARGIN_TOL,
) -> SlowManifoldPoint:
    """Newton solve of F(z_c, x_bar, z_d) = 0 for the fast variables.

    ``guess`` seeds the fast vector (zeros by default; the wind rows always
    converge to zero).  Stability is classified against ``margin_tol``:
    strictly attracting, marginal within tolerance, or repelling.
    """
    dims = model.dims
    if dims.n_xbar == 0:
        raise ParameterError("model has no fast variables")
    z_c = np.asarray(z_c, dtype=float).reshape(-1)
    z_d = np.zeros(dims.n_zd) if z_d is None else np.asarray(z_d, dtype=float).reshape(-1)
    x = (
        np.zeros(dims.n_xbar)
        if guess is None
        else np.array(guess, dtype=float).reshape(-1)
    )
    if x.size != dims.n_xbar:
        raise ParameterError(f"guess must have length {dims.n_xbar}")
    y = y_guess
    best = math.inf
    for _ in range(max_iter):
        f, y = model.reduced_fast_rhs(z_c, x, z_d, y_guess=y)
        rnorm = float(np.linalg.norm(f, np.inf))
        best = min(best, rnorm)
        if rnorm <= tol:
            break
        jac = model.reduced_fast_jacobian(z_c, x, z_d, y_guess=y)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                f"fast Jacobian singular during manifold solve at z_c={z_c}",
                best_residual=best,
            ) from exc
        x = x + step
    else:
        raise ConvergenceError(
            f"slow-manifold solve did not reach tol={tol:g} in {max_iter} "
            f"iterations (best residual {best:.3e})",
            best_residual=best,
        )
    jac = model.reduced_fast_jacobian(z_c, x, z_d, y_guess=y)
    eigs = np.linalg.eigvals(jac)
    margin = float(np.max(eigs.real))
    return SlowManifoldPoint(
        z_c=z_c,
        z_d=z_d,
        x_star=x,
        y_bar=y,
        eigenvalues=eigs,
        margin=margin,
        stability=_classify(margin, margin_tol),
        residual=rnorm,
    )


def verify_uniform_stability(
    model: SystemModel,
    z_c_grid,
    z_d=None,
    guess=None,
    tol: float = 1e-10,
    max_iter: int = 50,
    margin_tol: float = MARGIN_TOL,
) -> StabilityReport:
    """Solve and classify the manifold over a grid of slow states.

    Solutions are warm-started from the previous grid point.  Points where
    the Newton solve fails are reported; with failures present the overall
    verdict is unknown (None) rather than a claim.
    """
    grid = np.atleast_2d(np.asarray(z_c_grid, dtype=float))
    points: list = []
    failures: list = []
    x0 = guess
    y0 = None
    for z in grid:
        try:
            pt = solve_slow_manifold(
                model, z, z_d=z_d, guess=x0, y_guess=y0, tol=tol,
                max_iter=max_iter, margin_tol=margin_tol,
            )
        except (ConvergenceError, NumericalError) as exc:
            failures.append((z.copy(), str(exc)))
            continue
        points.append(pt)
        x0 = pt.x_star
        y0 = pt.y_bar
    if failures:
        verdict = None
    else:
        verdict = all(p.stability == "stable" for p in points)
    worst = max((p.margin for p in points), default=None)
    return StabilityReport(
        points=points, failures=failures, all_stable=verdict, worst_margin=worst
    )


def invariant_manifold_correction(
    model: SystemModel, point: SlowManifoldPoint
) -> np.ndarray:
    """First-order invariant manifold l* = x* + epsilon * u.

    u = (dF/dx)^{-1} (dx*/dz_c) H_c with dx*/dz_c obtained by implicit
    differentiation of F(z_c, x*(z_c)) = 0.
    """
    dims = model.dims
    jac = model.reduced_fast_jacobian(
        point.z_c, point.x_star, point.z_d, y_guess=point.y_bar
    )
    if dims.n_zc == 0:
        return point.x_star.copy()
    dF_dz = model.reduced_fast_zc_jacobian(
        point.z_c, point.x_star, point.z_d, y_guess=point.y_bar
    )
    dxstar_dz = -np.linalg.solve(jac, dF_dz)
    h_c = model.reduced_slow_rhs(
        point.z_c, point.x_star, point.z_d, y_guess=point.y_bar
    )
    u = np.linalg.solve(jac, dxstar_dz @ h_c)
    return point.x_star + dims.epsilon * u


def solve_lyapunov(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve a @ L + L @ a.T + d = 0 for symmetric positive definite L.

    a must be Hurwitz and d symmetric positive semidefinite, otherwise no
    positive definite solution exists.  The solution is symmetrized, its
    residual checked against 1e-10 * ||d||_inf, and positive definiteness
    verified by Cholesky factorization.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != d.shape:
        raise ParameterError(
            f"need square matrices of equal shape, got {a.shape} and {d.shape}"
        )
    margin = float(np.max(np.linalg.eigvals(a).real))
    if margin >= 0.0:
        raise NumericalError(
            f"drift matrix is not Hurwitz (max Re eig = {margin:.3e}); "
            "no positive definite Lyapunov solution exists"
        )
    sect = sla.solve_continuous_lyapunov(a, -d)
    sect = 0.5 * (sect + sect.T)
    residual = float(np.linalg.norm(a @ sect + sect @ a.T + d, np.inf))
    if residual > LYAPUNOV_RESIDUAL_TOL * float(np.linalg.norm(d, np.inf)):
        raise NumericalError(
            f"Lyapunov residual {residual:.3e} exceeds tolerance; "
            "solution not trustworthy"
        )
    try:
        np.linalg.cholesky(sect)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Lyapunov solution is not positive definite") from exc
    return sect


def solve_cross_section(
    model: SystemModel,
    point: SlowManifoldPoint,
    kappa: float = 1e-3,
    center: np.ndarray | None = None,
) -> np.ndarray:
    """Tube cross-section from the algebraic Lyapunov equation.

    The drift Jacobian is evaluated at the corrected center (l*), the noise
    shape is identity on the wind rows and kappa * identity on the device
    rows.
    """
    dims = model.dims
    if not kappa > 0.0:
        raise ParameterError(f"kappa must be > 0, got {kappa}")
    if center is None:
        center = invariant_manifold_correction(model, point)
    a = model.reduced_fast_jacobian(point.z_c, center, point.z_d, y_guess=point.y_bar)
    margin = float(np.max(np.linalg.eigvals(a).real))
    if margin >= 0.0:
        raise NumericalError(
            "cross-section requested at a non-attracting point "
            f"(max Re eig = {margin:.3e})"
        )
    d = np.diag(np.concatenate([np.full(dims.n_x, kappa), np.ones(dims.n_w)]))
    return solve_lyapunov(a, d)


class Tube:
    """Concentration tube sampled along a trajectory.

    Centers and cross-sections are held piecewise-constant between samples
    (nearest-sample lookup), which is adequate when the slow drift moves
    little over one stride.
    """

    def __init__(
        self,
        taus: np.ndarray,
        centers: np.ndarray,
        sections: np.ndarray,
        h: float,
        kappa: float,
        epsilon: float,
    ):
        self.taus = np.asarray(taus, dtype=float)
        self.centers = np.asarray(centers, dtype=float)
        self.sections = np.asarray(sections, dtype=float)
        self.h = float(h)
        self.kappa = float(kappa)
        self.epsilon = float(epsilon)
        if not self.h > 0.0:
            raise ParameterError(f"tube depth h must be > 0, got {h}")
        self._chols = [np.linalg.cholesky(s) for s in self.sections]

    def index_at(self, tau: float) -> int:
        i = int(np.searchsorted(self.taus, tau))
        if i <= 0:
            return 0
        if i >= self.taus.size:
            return self.taus.size - 1
        return i if self.taus[i] - tau < tau - self.taus[i - 1] else i - 1

    def indices_for(self, taus: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.taus, taus)
        idx = np.clip(idx, 0, self.taus.size - 1)
        left = np.clip(idx - 1, 0, self.taus.size - 1)
        use_left = (taus - self.taus[left]) <= (self.taus[idx] - taus)
        return np.where(use_left & (idx > 0), left, idx)

    def center_at(self, tau: float) -> np.ndarray:
        return self.centers[self.index_at(tau)]

    def section_at(self, tau: float) -> np.ndarray:
        return self.sections[self.index_at(tau)]

    def chol_at(self, tau: float) -> np.ndarray:
        return self._chols[self.index_at(tau)]

    def half_widths(self, i: int) -> np.ndarray:
        """Per-variable bound h * sqrt(diag L) of the cross-section at sample i."""
        return self.h * np.sqrt(np.diag(self.sections[i]))


def build_tube(
    model: SystemModel,
    traj: Trajectory,
    h: float,
    kappa: float = 1e-3,
    stride: int = 10,
) -> Tube:
    """Tube around the manifold evaluated along a (deterministic) trajectory.

    Manifold solves are warm-started sample to sample; ``stride`` thins the
    sampling (the last sample is always included).
    """
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    idx = list(range(0, len(traj), stride))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    centers = np.empty((len(idx), model.dims.n_xbar))
    sections = np.empty((len(idx), model.dims.n_xbar, model.dims.n_xbar))
    guess = traj.x_bar[0]
    y0 = traj.y_bar[0]
    for row, i in enumerate(idx):
        pt = solve_slow_manifold(
            model, traj.z_c[i], z_d=traj.z_d[i], guess=guess, y_guess=y0
        )
        center = invariant_manifold_correction(model, pt)
        sections[row] = solve_cross_section(model, pt, kappa=kappa, center=center)
        centers[row] = center
        guess = pt.x_star
        y0 = pt.y_bar
    return Tube(
        taus=traj.tau[idx],
        centers=centers,
        sections=sections,
        h=h,
        kappa=kappa,
        epsilon=model.dims.epsilon,
    )


def tube_distance(state_or_xbar, center: np.ndarray, section: np.ndarray) -> float:
    """Mahalanobis-type distance sqrt(d^T L^{-1} d) of the fast variables."""
    if isinstance(state_or_xbar, SlowFastState):
        x = state_or_xbar.x_bar
    else:
        x = np.asarray(state_or_xbar, dtype=float).reshape(-1)
    d = x - center
    chol = np.linalg.cholesky(section)
    w = sla.solve_triangular(chol, d, lower=True)
    return float(np.linalg.norm(w))


def in_tube(state: SlowFastState, tube: Tube) -> bool:
    """Whether the state lies strictly inside the tube of depth tube.h."""
    i = tube.index_at(state.tau)
    d = state.x_bar - tube.centers[i]
    w = sla.solve_triangular(tube._chols[i], d, lower=True)
    return float(w @ w) < tube.h**2


@dataclass(frozen=True)
class TheoremBoundParams:
    """Constants of the tube exit-probability bound."""

    C: float
    n_zc: int
    n_x: int
    epsilon: float
    sigma: float

    def __post_init__(self):
        if not self.C > 0.0:
            raise ParameterError(f"C must be > 0, got {self.C}")
        if not self.sigma > 0.0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if not self.epsilon > 0.0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")


def theorem_bound(h: float, params: TheoremBoundParams, tau: float) -> float:
    """Exit-probability bound min(1, (C^n_zc + h^-n_x)(1 + tau/eps^2) e^{-h^2/2 sigma^2}).

    Nondecreasing in the horizon tau and, in its informative range,
    decreasing in the depth h.
    """
    if not h > 0.0:
        raise ParameterError(f"h must be > 0, got {h}")
    if tau < 0.0:
        raise ParameterError(f"tau must be >= 0, got {tau}")
    coeff = params.C**params.n_zc + h ** (-params.n_x)
    growth = 1.0 + tau / params.epsilon**2
    value = coeff * growth * math.exp(-(h**2) / (2.0 * params.sigma**2))
    return min(1.0, value)


def fit_bound_constant(
    h_values: Sequence[float],
    exit_fractions: Sequence[float],
    n_zc: int,
    n_x: int,
    epsilon: float,
    sigma: float,
    tau: float,
) -> TheoremBoundParams:
    """Calibrate C by least squares of the log-bound against observed exits.

    Only depths with exit fraction strictly inside (0, 1) inform the fit.
    With n_zc = 0 the bound has no C dependence and C = 1 is returned.
    """
    h = np.asarray(h_values, dtype=float)
    p = np.asarray(exit_fractions, dtype=float)
    mask = (p > 0.0) & (p < 1.0)
    if n_zc == 0:
        return TheoremBoundParams(C=1.0, n_zc=n_zc, n_x=n_x, epsilon=epsilon, sigma=sigma)
    if not np.any(mask):
        raise DegenerateFitError(
            "no exit fractions strictly inside (0, 1); cannot calibrate C"
        )
    h = h[mask]
    logp = np.log(p[mask])
    growth = math.log(1.0 + tau / epsilon**2)

    def loss(log_c: float) -> float:
        c = math.exp(log_c)
        model_logp = (
            np.log(c**n_zc + h ** (-n_x)) + growth - h**2 / (2.0 * sigma**2)
        )
        return float(np.sum((model_logp - logp) ** 2))

    res = optimize.minimize_scalar(loss, bounds=(-30.0, 30.0), method="bounded")
    return TheoremBoundParams(
        C=math.exp(res.x), n_zc=n_zc, n_x=n_x, epsilon=epsilon, sigma=sigma
    )


def manifold_distance_along(
    model: SystemModel, traj: Trajectory, stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Sup-norm distance of the fast variables from the slow manifold.

    Returns (taus, distances) at the strided samples; solves are
    warm-started along the trajectory.
    """
    idx = list(range(0, len(traj), stride))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    taus = traj.tau[idx]
    dist = np.empty(len(idx))
    guess = traj.x_bar[idx[0]]
    y0 = traj.y_bar[idx[0]]
    for row, i in enumerate(idx):
        pt = solve_slow_manifold(
            model, traj.z_c[i], z_d=traj.z_d[i], guess=guess, y_guess=y0
        )
        dist[row] = float(np.linalg.norm(traj.x_bar[i] - pt.x_star, np.inf))
        guess = pt.x_star
        y0 = pt.y_bar
    return taus, dist
