"""Slow-fast differential-algebraic system container and built-in devices.

A system couples four groups of variables:

* ``z_c``    slow continuous states (load recovery, ...), rate ``h_c``
* ``x_bar``  fast continuous states: device states ``x`` followed by the
             latent wind states ``eta_w``; drift ``f`` scaled by 1/epsilon
* ``y_bar``  algebraic variables: network variables ``y`` followed by the
             wind speeds ``y_w``
* ``z_d``    discrete states (tap positions, event timers)

Time is measured on the slow clock ``tau``; fast devices relax on the scale
``epsilon * tau``.  Noise of amplitude ``sigma`` enters only the last ``n_w``
fast rows (the wind states).  The wind speed rows of the algebraic system,
``y_w = g_w(eta_w)``, normalize the latent state by its stationary std
``sigma / sqrt(2 alpha)`` before the rank transform, so ``sigma`` cancels
from the speed statistics.

All residual callables share the signature

    fn(z_c, x_bar, y_bar, z_d, params) -> ndarray

and must be pure.  Parameter switches (e.g. a line loss) are modeled by
rebuilding the system with :meth:`SystemModel.with_params`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConvergenceError, ParameterError, SingularityError
from .wind import WindSourceSpec, transform_gaussian

__all__ = [
    "ModelDims",
    "SlowFastState",
    "RecoveryLoad",
    "LtcDevice",
    "WindInjection",
    "SystemModel",
    "ltc_step",
    "wind_power_injection",
]

# Relative finite-difference step for all numerical Jacobians.
FD_SCALE = 1e-6
# |det J| <= SINGULAR_ABORT_TOL * norm(J)**n aborts an algebraic solve.
SINGULAR_ABORT_TOL = 1e-12


@dataclass(frozen=True)
class ModelDims:
    """Variable-group sizes and the time-scale ratio epsilon."""

    n_zc: int
    n_x: int
    n_y: int
    n_zd: int
    n_w: int
    epsilon: float

    def __post_init__(self):
        for name in ("n_zc", "n_x", "n_y", "n_zd", "n_w"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if not self.epsilon > 0.0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def n_xbar(self) -> int:
        return self.n_x + self.n_w

    @property
    def n_ybar(self) -> int:
        return self.n_y + self.n_w


def _vec(a, n: int, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=float).reshape(-1)
    if out.size != n:
        raise ParameterError(f"{name} must have length {n}, got {out.size}")
    return out


@dataclass(frozen=True)
class SlowFastState:
    """One point of the coupled system at slow time ``tau``.

    Arrays are treated as immutable values; use :meth:`replace` to derive
    updated states.
    """

    z_c: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    z_d: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        for name in ("z_c", "x_bar", "y_bar", "z_d"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1)
            )

    def replace(self, **kw) -> "SlowFastState":
        return replace(self, **kw)


@dataclass(frozen=True)
class RecoveryLoad:
    """Exponential-recovery load.

    The internal states x_p, x_q evolve as

        dx_p/dtau = -x_p / T_p + p_s(v) - p_t(v)

    and the consumed powers are p = x_p / T_p + p_t(v) (same for q).  At any
    frozen voltage the unique equilibrium consumes exactly the static
    characteristic.  The static/transient characteristics are
    ``p_s * v**exp_static`` and ``p_t * v**exp_transient``; the base values
    are the absorptions at v = 1.
    """

    T_p: float
    T_q: float
    p_s: float
    q_s: float
    p_t: float
    q_t: float
    exp_static: float = 0.0
    exp_transient: float = 0.0

    def __post_init__(self):
        if not self.T_p > 0.0:
            raise ParameterError(f"T_p must be > 0, got {self.T_p}")
        if not self.T_q > 0.0:
            raise ParameterError(f"T_q must be > 0, got {self.T_q}")

    def p_static(self, v: float = 1.0) -> float:
        return self.p_s * v**self.exp_static

    def q_static(self, v: float = 1.0) -> float:
        return self.q_s * v**self.exp_static

    def p_transient(self, v: float = 1.0) -> float:
        return self.p_t * v**self.exp_transient

    def q_transient(self, v: float = 1.0) -> float:
        return self.q_t * v**self.exp_transient

    def xp_rate(self, x_p: float, v: float = 1.0) -> float:
        return -x_p / self.T_p + self.p_static(v) - self.p_transient(v)

    def xq_rate(self, x_q: float, v: float = 1.0) -> float:
        return -x_q / self.T_q + self.q_static(v) - self.q_transient(v)

    def real_power(self, x_p: float, v: float = 1.0) -> float:
        return x_p / self.T_p + self.p_transient(v)

    def reactive_power(self, x_q: float, v: float = 1.0) -> float:
        return x_q / self.T_q + self.q_transient(v)

    def power_residual(self, p: float, x_p: float, v: float = 1.0) -> float:
        """Residual form p - x_p/T_p - p_t(v) of the consumption relation."""
        return p - x_p / self.T_p - self.p_transient(v)

    def equilibrium_states(self, v: float = 1.0) -> tuple[float, float]:
        """x_p, x_q values at which the recovery dynamics are stationary."""
        return (
            self.T_p * (self.p_static(v) - self.p_transient(v)),
            self.T_q * (self.q_static(v) - self.q_transient(v)),
        )


@dataclass(frozen=True)
class LtcDevice:
    """Load tap changer with dead band, hard limits, and a recurring timer.

    The tap may move only when ``now`` has reached ``next_event_time``; each
    firing re-checks the dead band against the monitored voltage and advances
    the timer by ``delay`` regardless of whether the tap moved.
    """

    m: float
    delta_m: float
    m_min: float
    m_max: float
    v0: float
    d: float
    delay: float
    next_event_time: float
    monitor: int = 0  # index into y_bar of the controlled voltage

    def __post_init__(self):
        if not self.delta_m > 0.0:
            raise ParameterError(f"delta_m must be > 0, got {self.delta_m}")
        if not self.m_min <= self.m <= self.m_max:
            raise ParameterError(
                f"m={self.m} outside limits [{self.m_min}, {self.m_max}]"
            )
        if not self.d >= 0.0:
            raise ParameterError(f"dead band d must be >= 0, got {self.d}")
        if not self.delay > 0.0:
            raise ParameterError(f"delay must be > 0, got {self.delay}")


def ltc_step(ltc: LtcDevice, v: float, now: float) -> LtcDevice:
    """Pure tap update at time ``now``.

    Raises the tap when the voltage sits above the dead band, lowers it when
    below, holds otherwise; limits saturate exactly at m_min/m_max.  Before
    ``next_event_time`` the device is returned unchanged.
    """
    if now < ltc.next_event_time:
        return ltc
    m = ltc.m
    if v > ltc.v0 + ltc.d and ltc.m < ltc.m_max:
        m = min(ltc.m + ltc.delta_m, ltc.m_max)
    elif v < ltc.v0 - ltc.d and ltc.m > ltc.m_min:
        m = max(ltc.m - ltc.delta_m, ltc.m_min)
    return replace(ltc, m=m, next_event_time=ltc.next_event_time + ltc.delay)


@dataclass(frozen=True)
class WindInjection:
    """Piecewise power curve mapping wind speed (m/s) to injected power (MW).

    Zero below cut-in and at/above cut-out, cubic interpolation between
    cut-in and rated speed, flat at rated power up to cut-out.  The curve is
    continuous except at cut-out.
    """

    cut_in: float
    rated_speed: float
    cut_out: float
    rated_power: float
    bus_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.cut_in < self.rated_speed < self.cut_out:
            raise ParameterError(
                "require 0 <= cut_in < rated_speed < cut_out, got "
                f"({self.cut_in}, {self.rated_speed}, {self.cut_out})"
            )
        if self.rated_power < 0.0:
            raise ParameterError(f"rated_power must be >= 0, got {self.rated_power}")


def wind_power_injection(speed, inj: WindInjection):
    """Evaluate the power curve at one or many speeds."""
    v = np.asarray(speed, dtype=float)
    cubic = inj.rated_power * (v**3 - inj.cut_in**3) / (
        inj.rated_speed**3 - inj.cut_in**3
    )
    p = np.where(
        v < inj.cut_in,
        0.0,
        np.where(v < inj.rated_speed, cubic, np.where(v < inj.cut_out, inj.rated_power, 0.0)),
    )
    return float(p) if p.ndim == 0 else p


def _freeze_params(params: Mapping | None) -> Mapping:
    return MappingProxyType(dict(params or {}))


@dataclass(frozen=True)
class SystemModel:
    """Immutable slow-fast DAE system.

    ``slow_rhs``, ``fast_rhs`` and ``algebraic`` provide the device rows
    only; the wind rows (fast drift ``-alpha_i * eta_i`` and algebraic
    ``y_w - g_w(eta_w)``) are appended automatically.  ``discrete_update``
    maps ``(z_c, x_bar, y_bar, z_d, params, now) -> (z_d', events)`` and is
    optional, as is the disturbance schedule ``(time, params-patch)``.
    """

    dims: ModelDims
    slow_rhs: Callable | None = None
    fast_rhs: Callable | None = None
    algebraic: Callable | None = None
    discrete_update: Callable | None = None
    wind: tuple[WindSourceSpec, ...] = ()
    sigma: float = 0.0
    params: Mapping = field(default_factory=dict)
    disturbances: tuple[tuple[float, Mapping], ...] = ()
    labels: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", _freeze_params(self.params))
        object.__setattr__(self, "wind", tuple(self.wind))
        object.__setattr__(
            self,
            "disturbances",
            tuple(
                sorted(
                    ((float(t), _freeze_params(p)) for t, p in self.disturbances),
                    key=lambda item: item[0],
                )
            ),
        )
        if len(self.wind) != self.dims.n_w:
            raise ParameterError(
                f"model declares n_w={self.dims.n_w} but {len(self.wind)} wind sources"
            )
        if self.sigma < 0.0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")
        if self.dims.n_zc > 0 and self.slow_rhs is None:
            raise ParameterError("n_zc > 0 requires a slow_rhs")
        if self.dims.n_x > 0 and self.fast_rhs is None:
            raise ParameterError("n_x > 0 requires a fast_rhs")
        if self.dims.n_y > 0 and self.algebraic is None:
            raise ParameterError("n_y > 0 requires an algebraic residual")
        object.__setattr__(
            self, "_wind_alphas", np.array([w.ou.alpha for w in self.wind])
        )

    # -- variable-group helpers -------------------------------------------

    @property
    def wind_alphas(self) -> np.ndarray:
        return self._wind_alphas

    def fast_device_part(self, x_bar: np.ndarray) -> np.ndarray:
        return x_bar[: self.dims.n_x]

    def fast_wind_part(self, x_bar: np.ndarray) -> np.ndarray:
        return x_bar[self.dims.n_x :]

    def alg_network_part(self, y_bar: np.ndarray) -> np.ndarray:
        return y_bar[: self.dims.n_y]

    def alg_wind_part(self, y_bar: np.ndarray) -> np.ndarray:
        return y_bar[self.dims.n_y :]

    def with_params(self, patch: Mapping) -> "SystemModel":
        """New system with updated parameters (used for line-loss switches)."""
        merged = dict(self.params)
        merged.update(patch)
        return replace(self, params=merged)

    def wind_speeds(self, eta_w: np.ndarray) -> np.ndarray:
        """g_w: latent wind states to speeds under the model noise amplitude.

        With sigma = 0 the map degenerates to the constant median speed,
        which is the smooth deterministic limit.
        """
        eta_w = np.asarray(eta_w, dtype=float)
        out = np.empty(self.dims.n_w)
        for i, src in enumerate(self.wind):
            if self.sigma == 0.0:
                out[i] = src.target.median()
            else:
                amp = self.sigma / math.sqrt(2.0 * src.ou.alpha)
                out[i] = transform_gaussian(eta_w[i], amp, src.target)
        return out

    # -- residual evaluation ----------------------------------------------

    def eval_slow_rhs(self, state: SlowFastState) -> np.ndarray:
        """Slow rate h_c; empty for systems without slow states."""
        if self.dims.n_zc == 0:
            return np.zeros(0)
        out = self.slow_rhs(state.z_c, state.x_bar, state.y_bar, state.z_d, self.params)
        return _vec(out, self.dims.n_zc, "slow_rhs output")

    def eval_fast_rhs(self, state: SlowFastState) -> np.ndarray:
        """Fast drift: device rows from ``fast_rhs``, then -alpha_i * eta_i."""
        parts = []
        if self.dims.n_x > 0:
            dev = self.fast_rhs(state.z_c, state.x_bar, state.y_bar, state.z_d, self.params)
            parts.append(_vec(dev, self.dims.n_x, "fast_rhs output"))
        if self.dims.n_w > 0:
            parts.append(-self.wind_alphas * self.fast_wind_part(state.x_bar))
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def eval_algebraic(self, state: SlowFastState) -> np.ndarray:
        """Algebraic residual: network rows, then y_w - g_w(eta_w)."""
        parts = []
        if self.dims.n_y > 0:
            net = self.algebraic(state.z_c, state.x_bar, state.y_bar, state.z_d, self.params)
            parts.append(_vec(net, self.dims.n_y, "algebraic output"))
        if self.dims.n_w > 0:
            speeds = self.wind_speeds(self.fast_wind_part(state.x_bar))
            parts.append(self.alg_wind_part(state.y_bar) - speeds)
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def algebraic_jacobian(self, state: SlowFastState) -> np.ndarray:
        """Central finite-difference Jacobian of the algebraic residual in y_bar.

        Step per column: FD_SCALE * max(1, |y_i|).
        """
        n = self.dims.n_ybar
        jac = np.zeros((n, n))
        y0 = state.y_bar
        for j in range(n):
            h = FD_SCALE * max(1.0, abs(y0[j]))
            yp = y0.copy()
            yp[j] += h
            ym = y0.copy()
            ym[j] -= h
            rp = self.eval_algebraic(state.replace(y_bar=yp))
            rm = self.eval_algebraic(state.replace(y_bar=ym))
            jac[:, j] = (rp - rm) / (2.0 * h)
        return jac

    def is_singular(self, state: SlowFastState, tol: float = 1e-8) -> tuple[bool, float]:
        """Scale-free singularity test |det J| <= tol * norm(J, inf)**n."""
        n = self.dims.n_ybar
        if n == 0:
            return False, 1.0
        jac = self.algebraic_jacobian(state)
        det = float(np.linalg.det(jac))
        norm = float(np.linalg.norm(jac, np.inf))
        if norm == 0.0:
            return True, det
        return abs(det) <= tol * norm**n, det

    def solve_algebraic(
        self,
        state: SlowFastState,
        guess: np.ndarray | None = None,
        tol: float = 1e-8,
        max_iter: int = 25,
    ) -> np.ndarray:
        """Newton solve of the algebraic constraints for y_bar.

        The wind rows are linear in y_w, so they are closed out exactly by
        setting y_w = g_w(eta_w) before iterating on the network rows.
        """
        n = self.dims.n_ybar
        if n == 0:
            return np.zeros(0)
        y = np.array(state.y_bar if guess is None else guess, dtype=float).reshape(-1)
        if y.size != n:
            raise ParameterError(f"guess must have length {n}, got {y.size}")
        if self.dims.n_w > 0:
            y[self.dims.n_y :] = self.wind_speeds(self.fast_wind_part(state.x_bar))
        best = math.inf
        for _ in range(max_iter):
            cur = state.replace(y_bar=y)
            res = self.eval_algebraic(cur)
            rnorm = float(np.linalg.norm(res, np.inf))
            best = min(best, rnorm)
            if rnorm <= tol:
                return y
            jac = self.algebraic_jacobian(cur)
            det = float(np.linalg.det(jac))
            norm = float(np.linalg.norm(jac, np.inf))
            if norm == 0.0 or abs(det) <= SINGULAR_ABORT_TOL * norm**n:
                raise SingularityError(
                    f"algebraic Jacobian singular at tau={state.tau:.6g} "
                    f"(|det|={abs(det):.3e})",
                    state=cur,
                    det=det,
                )
            try:
                step = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError as exc:
                raise SingularityError(
                    f"algebraic Jacobian not invertible at tau={state.tau:.6g}",
                    state=cur,
                    det=det,
                ) from exc
            y = y + step
        raise ConvergenceError(
            f"algebraic solve did not reach tol={tol:g} in {max_iter} iterations "
            f"(best residual {best:.3e})",
            best_residual=best,
        )

    def apply_discrete(self, state: SlowFastState, now: float | None = None) -> SlowFastState:
        """Fire every due discrete device; continuous variables untouched."""
        new_state, _ = self.apply_discrete_logged(state, now)
        return new_state

    def apply_discrete_logged(
        self, state: SlowFastState, now: float | None = None
    ) -> tuple[SlowFastState, list]:
        if self.discrete_update is None or self.dims.n_zd == 0:
            return state, []
        t = state.tau if now is None else float(now)
        z_d_new, events = self.discrete_update(
            state.z_c, state.x_bar, state.y_bar, state.z_d, self.params, t
        )
        z_d_new = _vec(z_d_new, self.dims.n_zd, "discrete_update output")
        if np.array_equal(z_d_new, state.z_d):
            return state, list(events)
        return state.replace(z_d=z_d_new), list(events)

    # -- reduced (algebraically closed) quantities ------------------------

    def reduced_fast_rhs(
        self,
        z_c: np.ndarray,
        x_bar: np.ndarray,
        z_d: np.ndarray,
        y_guess: np.ndarray | None = None,
        tol: float = 1e-10,
        max_iter: int = 50,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Fast drift with the algebraic constraints eliminated.

        Returns (F, y_bar) where y_bar solves the constraints at the given
        point.  This closure is what the slow-manifold and tube computations
        differentiate, so the wind-speed chain rule is captured.
        """
        probe = SlowFastState(
            z_c=z_c,
            x_bar=x_bar,
            y_bar=np.zeros(self.dims.n_ybar) if y_guess is None else y_guess,
            z_d=z_d,
        )
        y = self.solve_algebraic(probe, guess=y_guess, tol=tol, max_iter=max_iter)
        closed = probe.replace(y_bar=y)
        return self.eval_fast_rhs(closed), y

    def reduced_slow_rhs(
        self,
        z_c: np.ndarray,
        x_bar: np.ndarray,
        z_d: np.ndarray,
        y_guess: np.ndarray | None = None,
        tol: float = 1e-10,
    ) -> np.ndarray:
        probe = SlowFastState(
            z_c=z_c,
            x_bar=x_bar,
            y_bar=np.zeros(self.dims.n_ybar) if y_guess is None else y_guess,
            z_d=z_d,
        )
        y = self.solve_algebraic(probe, guess=y_guess, tol=tol)
        return self.eval_slow_rhs(probe.replace(y_bar=y))

    def reduced_fast_jacobian(
        self,
        z_c: np.ndarray,
        x_bar: np.ndarray,
        z_d: np.ndarray,
        y_guess: np.ndarray | None = None,
    ) -> np.ndarray:
        """d F / d x_bar of the reduced fast drift, by central differences."""
        n = self.dims.n_xbar
        jac = np.zeros((n, n))
        base_guess = y_guess
        for j in range(n):
            h = FD_SCALE * max(1.0, abs(x_bar[j]))
            xp = x_bar.copy()
            xp[j] += h
            xm = x_bar.copy()
            xm[j] -= h
            fp, _ = self.reduced_fast_rhs(z_c, xp, z_d, y_guess=base_guess)
            fm, _ = self.reduced_fast_rhs(z_c, xm, z_d, y_guess=base_guess)
            jac[:, j] = (fp - fm) / (2.0 * h)
        return jac

    def reduced_fast_zc_jacobian(
        self,
        z_c: np.ndarray,
        x_bar: np.ndarray,
        z_d: np.ndarray,
        y_guess: np.ndarray | None = None,
    ) -> np.ndarray:
        """d F / d z_c of the reduced fast drift, by central differences."""
        n = self.dims.n_xbar
        m = self.dims.n_zc
        jac = np.zeros((n, m))
        for j in range(m):
            h = FD_SCALE * max(1.0, abs(z_c[j]))
            zp = z_c.copy()
            zp[j] += h
            zm = z_c.copy()
            zm[j] -= h
            fp, _ = self.reduced_fast_rhs(zp, x_bar, z_d, y_guess=y_guess)
            fm, _ = self.reduced_fast_rhs(zm, x_bar, z_d, y_guess=y_guess)
            jac[:, j] = (fp - fm) / (2.0 * h)
        return jac
