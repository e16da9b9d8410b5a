"""Fixed-step time integration of slow-fast DAE systems.

Two schemes are provided:

* ``explicit``: Euler-Maruyama on the fast block, Euler on the slow block.
  Requires dt / epsilon <= 0.2 (validated before a run starts).
* ``semi-implicit``: one linearized backward-Euler solve on the fast block
  (implicit in the stiff fast drift), explicit slow update, noise added
  explicitly.  Stable for dt well above epsilon.

Both schemes advance the continuous variables and then re-solve the
algebraic constraints, so every recorded state is consistent.  A stochastic
step consumes exactly ``n_w`` normal draws; with sigma = 0 the draws are
still consumed but the update is bitwise identical to the deterministic
scheme.  Discrete devices and scheduled parameter switches fire at the first
grid point at or after their due time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ParameterError
from .model import SlowFastState, SystemModel
from .wind import RngStream

__all__ = [
    "SolverConfig",
    "Trajectory",
    "step_deterministic",
    "step_stochastic",
    "simulate",
    "find_consistent_init",
]

SCHEMES = ("explicit", "semi-implicit")

# Slack used when comparing event due times against grid times.
_TIME_SLACK = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    scheme: str = "semi-implicit"
    newton_tol: float = 1e-8
    newton_max_iter: int = 25
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ParameterError(
                f"scheme must be one of {SCHEMES}, got {self.scheme!r}"
            )
        if not self.newton_tol > 0.0:
            raise ParameterError(f"newton_tol must be > 0, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ParameterError("newton_max_iter must be >= 1")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")


class Trajectory:
    """Recorded run on a uniform grid (possibly decimated).

    Arrays are indexed (sample, variable).  ``event_log`` holds
    (time, device, old, new) tuples for tap moves and parameter switches.
    """

    def __init__(
        self,
        tau: np.ndarray,
        z_c: np.ndarray,
        x_bar: np.ndarray,
        y_bar: np.ndarray,
        z_d: np.ndarray,
        epsilon: float,
        mode: str,
        labels: Mapping | None = None,
        event_log: Sequence | None = None,
        seed: tuple[int, int] | None = None,
    ):
        self.tau = np.asarray(tau, dtype=float)
        self.z_c = np.asarray(z_c, dtype=float)
        self.x_bar = np.asarray(x_bar, dtype=float)
        self.y_bar = np.asarray(y_bar, dtype=float)
        self.z_d = np.asarray(z_d, dtype=float)
        self.epsilon = float(epsilon)
        self.mode = mode
        self.labels = dict(labels or {})
        self.event_log = list(event_log or [])
        self.seed = seed
        if not np.all(np.diff(self.tau) > 0.0):
            raise ParameterError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return self.tau.size

    @property
    def t(self) -> np.ndarray:
        """Fast-clock times t = tau / epsilon."""
        return self.tau / self.epsilon

    def state_at(self, i: int) -> SlowFastState:
        return SlowFastState(
            z_c=self.z_c[i],
            x_bar=self.x_bar[i],
            y_bar=self.y_bar[i],
            z_d=self.z_d[i],
            tau=float(self.tau[i]),
        )

    def final_state(self) -> SlowFastState:
        return self.state_at(len(self) - 1)


def _validate_startup(model: SystemModel, cfg: SolverConfig):
    if cfg.scheme == "explicit":
        ratio = cfg.dt / model.dims.epsilon
        if ratio > 0.2 + 1e-12:
            raise ParameterError(
                f"explicit scheme requires dt/epsilon <= 0.2, got {ratio:.3g}; "
                "reduce dt or use the semi-implicit scheme"
            )


def _advance(
    model: SystemModel,
    state: SlowFastState,
    cfg: SolverConfig,
    dW: np.ndarray | None,
) -> SlowFastState:
    """One step of the configured scheme; dW is None for deterministic."""
    dims = model.dims
    eps = dims.epsilon
    dt = cfg.dt
    h_c = model.eval_slow_rhs(state)
    f = model.eval_fast_rhs(state)
    if cfg.scheme == "explicit":
        dx = (dt / eps) * f
    else:
        jac = model.reduced_fast_jacobian(
            state.z_c, state.x_bar, state.z_d, y_guess=state.y_bar
        )
        lhs = np.eye(dims.n_xbar) - (dt / eps) * jac
        dx = np.linalg.solve(lhs, (dt / eps) * f)
    if dW is not None and model.sigma > 0.0 and dims.n_w > 0:
        noise = (model.sigma / math.sqrt(eps)) * dW
        dx = dx.copy()
        dx[dims.n_x :] += noise
    x_new = state.x_bar + dx
    z_new = state.z_c + dt * h_c
    moved = state.replace(z_c=z_new, x_bar=x_new, tau=state.tau + dt)
    y_new = model.solve_algebraic(
        moved, guess=state.y_bar, tol=cfg.newton_tol, max_iter=cfg.newton_max_iter
    )
    return moved.replace(y_bar=y_new)


def step_deterministic(
    model: SystemModel, state: SlowFastState, cfg: SolverConfig
) -> SlowFastState:
    """Advance one step without touching any RNG."""
    return _advance(model, state, cfg, dW=None)


def step_stochastic(
    model: SystemModel, state: SlowFastState, cfg: SolverConfig, rng
) -> SlowFastState:
    """Advance one step, consuming exactly n_w normal draws."""
    g = rng.generator() if isinstance(rng, RngStream) else rng
    dW = math.sqrt(cfg.dt) * g.standard_normal(model.dims.n_w)
    return _advance(model, state, cfg, dW=dW)


def _due(due_time: float, now: float) -> bool:
    return due_time <= now + _TIME_SLACK * max(1.0, abs(now))


def simulate(
    model: SystemModel,
    init: SlowFastState,
    horizon: float,
    cfg: SolverConfig,
    mode: str = "deterministic",
    rng=None,
) -> Trajectory:
    """Integrate from ``init.tau`` over ``horizon`` slow-time units.

    Scheduled parameter switches and discrete devices are processed at the
    first grid point at or after their due time, before the state is
    recorded, so recorded states are post-event and algebraically
    consistent.
    """
    if mode not in ("deterministic", "stochastic"):
        raise ParameterError(f"mode must be deterministic|stochastic, got {mode!r}")
    if not horizon >= 0.0:
        raise ParameterError(f"horizon must be >= 0, got {horizon}")
    _validate_startup(model, cfg)
    seed = None
    g = None
    if mode == "stochastic":
        if rng is None:
            raise ParameterError("stochastic mode requires an rng")
        if isinstance(rng, RngStream):
            seed = (rng.master_seed, rng.stream_index)
            g = rng.generator()
        else:
            g = rng

    n_steps = int(math.floor(horizon / cfg.dt + _TIME_SLACK))
    tau0 = init.tau
    dims = model.dims

    rec_idx = [k for k in range(0, n_steps + 1, cfg.record_every)]
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    rec_positions = {k: pos for pos, k in enumerate(rec_idx)}
    n_rec = len(rec_idx)

    tau_out = np.empty(n_rec)
    zc_out = np.empty((n_rec, dims.n_zc))
    xb_out = np.empty((n_rec, dims.n_xbar))
    yb_out = np.empty((n_rec, dims.n_ybar))
    zd_out = np.empty((n_rec, dims.n_zd))
    events: list = []

    active = model
    pending = list(active.disturbances)
    state = init
    for k in range(n_steps + 1):
        now = tau0 + k * cfg.dt
        # Parameter switches due at this grid point.
        while pending and _due(pending[0][0], now):
            due_t, patch = pending.pop(0)
            old = {key: active.params.get(key) for key in patch}
            active = active.with_params(patch)
            y = active.solve_algebraic(
                state, guess=state.y_bar, tol=cfg.newton_tol,
                max_iter=cfg.newton_max_iter,
            )
            state = state.replace(y_bar=y)
            events.append((now, "params", old, dict(patch)))
        # Discrete devices due at this grid point.
        if active.discrete_update is not None:
            new_state, fired = active.apply_discrete_logged(state, now=now)
            if fired:
                events.extend(fired)
            if new_state is not state:
                y = active.solve_algebraic(
                    new_state, guess=state.y_bar, tol=cfg.newton_tol,
                    max_iter=cfg.newton_max_iter,
                )
                state = new_state.replace(y_bar=y)
        pos = rec_positions.get(k)
        if pos is not None:
            tau_out[pos] = now
            zc_out[pos] = state.z_c
            xb_out[pos] = state.x_bar
            yb_out[pos] = state.y_bar
            zd_out[pos] = state.z_d
        if k == n_steps:
            break
        if mode == "stochastic":
            dW = math.sqrt(cfg.dt) * g.standard_normal(dims.n_w)
        else:
            dW = None
        state = _advance(active, state, cfg, dW=dW)
        state = state.replace(tau=tau0 + (k + 1) * cfg.dt)

    return Trajectory(
        tau=tau_out,
        z_c=zc_out,
        x_bar=xb_out,
        y_bar=yb_out,
        z_d=zd_out,
        epsilon=dims.epsilon,
        mode=mode,
        labels=model.labels,
        event_log=events,
        seed=seed,
    )


def find_consistent_init(
    model: SystemModel,
    partial: Mapping | None = None,
    mode: str = "deterministic",
    rng=None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> SlowFastState:
    """Complete a partial initial condition into a consistent state.

    ``partial`` may carry ``z_c``, ``x`` (device fast rows), ``z_d``,
    ``y_guess`` and ``tau``.  Latent wind states start at zero in
    deterministic mode and at a stationary draw (n_w normal draws) in
    stochastic mode; the algebraic variables are then solved.
    """
    partial = dict(partial or {})
    dims = model.dims
    z_c = np.asarray(partial.get("z_c", np.zeros(dims.n_zc)), dtype=float).reshape(-1)
    x_dev = np.asarray(partial.get("x", np.zeros(dims.n_x)), dtype=float).reshape(-1)
    z_d = np.asarray(partial.get("z_d", np.zeros(dims.n_zd)), dtype=float).reshape(-1)
    tau = float(partial.get("tau", 0.0))
    if z_c.size != dims.n_zc or x_dev.size != dims.n_x or z_d.size != dims.n_zd:
        raise ParameterError("partial initial condition has wrong dimensions")

    if mode == "stochastic":
        if rng is None:
            raise ParameterError("stochastic mode requires an rng")
        g = rng.generator() if isinstance(rng, RngStream) else rng
        amps = np.array(
            [model.sigma / math.sqrt(2.0 * src.ou.alpha) for src in model.wind]
        )
        eta = amps * g.standard_normal(dims.n_w)
    elif mode == "deterministic":
        eta = np.zeros(dims.n_w)
    else:
        raise ParameterError(f"mode must be deterministic|stochastic, got {mode!r}")

    x_bar = np.concatenate([x_dev, eta])
    y_guess = partial.get("y_guess")
    if y_guess is not None:
        y_guess = np.asarray(y_guess, dtype=float).reshape(-1)
    state = SlowFastState(
        z_c=z_c,
        x_bar=x_bar,
        y_bar=np.zeros(dims.n_ybar) if y_guess is None else y_guess,
        z_d=z_d,
        tau=tau,
    )
    y = model.solve_algebraic(state, guess=y_guess, tol=tol, max_iter=max_iter)
    return state.replace(y_bar=y)
