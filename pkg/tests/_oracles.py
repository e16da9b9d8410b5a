"""Independent oracles used by the tests.

Everything here is computed by a different route than the package under
test: quadrature instead of closed forms, Kronecker vectorization instead
of a Lyapunov solver, root bracketing instead of Newton.
"""

import math

import numpy as np
from scipy import integrate, optimize


def gamma_quad(z: float) -> float:
    """Gamma function by direct numerical integration of t**(z-1) e**-t.

    Split at t = 1 so the origin singularity (z < 1) and the tail are
    handled separately; the remainder beyond t = 60 is below 1e-17 for
    the z values used in the tests.
    """
    fn = lambda t: t ** (z - 1.0) * math.exp(-t)
    lo, err_lo = integrate.quad(fn, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    hi, err_hi = integrate.quad(fn, 1.0, 60.0, epsabs=1e-13, epsrel=1e-12, limit=200)
    val = lo + hi
    if err_lo + err_hi > 1e-10 * max(1.0, abs(val)):
        raise RuntimeError(f"gamma quadrature did not converge: err={err_lo + err_hi}")
    return val


def normal_cdf_quad(u: float, mean: float = 0.0, var: float = 1.0) -> float:
    """Normal CDF by quadrature of the density (tail below -12 sd is < 2e-33)."""
    z = (u - mean) / math.sqrt(var)
    val, _ = integrate.quad(
        lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi), -12.0, z
    )
    return val


def weibull_cdf_quad(u: float, k: float, lam: float) -> float:
    """Weibull CDF by quadrature of the density."""
    if u <= 0.0:
        return 0.0
    val, _ = integrate.quad(
        lambda t: (k / lam) * (t / lam) ** (k - 1.0) * math.exp(-((t / lam) ** k)),
        0.0,
        u,
    )
    return val


def lyapunov_kron_solve(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve a L + L a^T + d = 0 by vectorizing to a linear system.

    Row-major vec: vec(a L) = (a kron I) vec(L), vec(L a^T) = (I kron a) vec(L).
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    n = a.shape[0]
    eye = np.eye(n)
    k = np.kron(a, eye) + np.kron(eye, a)
    vec = np.linalg.solve(k, -d.reshape(n * n))
    return vec.reshape(n, n)


def bracketed_root(fn, lo: float, hi: float) -> float:
    """Root of a scalar function by bracketing (no derivatives)."""
    return optimize.brentq(fn, lo, hi, xtol=1e-14, rtol=8.9e-16)
