"""Monte Carlo ensembles over the stochastic model.

One deterministic reference run plus n stochastic paths, each on its own
pre-assigned RNG stream so results are reproducible bit for bit regardless
of execution order or worker count.  Parallelism is opt-in through the
SLOWFAST_THREADS environment variable (unset or 1 = serial, 0 = one worker
per CPU); workers rebuild the model from the scenario mapping, so only
plain data crosses process boundaries.

Statistics: per-path sup deviations from the deterministic reference
(fast and slow blocks separately), tube exit fractions over a grid of
depths, and log-log scaling fits of the deviation medians against the
noise amplitude and the time-scale ratio.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateFitError,
    EnsembleError,
    NumericalError,
    ParameterError,
)
from .fixtures import model_from_scenario
from .manifold import Tube, build_tube
from .solver import RngStream, SolverConfig, Trajectory, find_consistent_init, simulate

__all__ = [
    "EnsembleConfig",
    "EnsembleStats",
    "ScalingResult",
    "run_ensemble",
    "deviation_statistics",
    "exit_statistics",
    "scaling_study",
    "speedup_report",
    "worker_count",
]

ENV_THREADS = "SLOWFAST_THREADS"


@dataclass(frozen=True)
class EnsembleConfig:
    """Knobs for an ensemble run.

    burn_in_tau None means the default 5 * epsilon * |log epsilon| for
    deviation statistics and 5 * epsilon * max|log h| for exit counts.
    """

    n_paths: int
    master_seed: int = 0
    h_grid: tuple = ()
    burn_in_tau: float | None = None
    tube_stride: int = 10
    kappa: float = 1e-3
    max_failure_fraction: float = 0.05
    record_every: int = 1
    sigma_list: tuple = ()
    epsilon_list: tuple = ()

    def __post_init__(self):
        if self.n_paths < 1:
            raise ParameterError(f"n_paths must be >= 1, got {self.n_paths}")
        if not 0.0 <= self.max_failure_fraction <= 1.0:
            raise ParameterError("max_failure_fraction must lie in [0, 1]")
        if any(h <= 0 for h in self.h_grid):
            raise ParameterError("tube depths must be positive")


@dataclass
class EnsembleStats:
    n_paths: int
    n_failed: int
    failures: list
    sup_fast_dev: np.ndarray
    sup_slow_dev: np.ndarray
    median_sup_fast: float
    median_sup_slow: float
    deviation_burn_in: float
    exit_fractions: dict
    sup_tube_distance: np.ndarray | None
    exit_burn_in: float | None
    timings: dict
    master_seed: int


@dataclass
class ScalingResult:
    """Fitted log-log exponents of the deviation medians.

    fits maps "sigma_fast" / "sigma_slow" / "epsilon_fast" / "epsilon_slow"
    to (exponent, half_width); degenerate flags sweeps whose fit was
    rejected (their fits entries are absent).
    """

    fits: dict
    degenerate: dict
    tables: dict


def worker_count(n_tasks: int) -> int:
    """Resolve SLOWFAST_THREADS against the task count. 1 = serial."""
    raw = os.environ.get(ENV_THREADS, "").strip()
    if not raw:
        return 1
    try:
        val = int(raw)
    except ValueError as exc:
        raise ParameterError(f"{ENV_THREADS} must be an integer, got {raw!r}") from exc
    if val < 0:
        raise ParameterError(f"{ENV_THREADS} must be >= 0, got {val}")
    if val == 0:
        val = os.cpu_count() or 1
    return max(1, min(val, n_tasks))


def _solver_config_from(scenario: dict) -> SolverConfig:
    solver = scenario.get("solver", {})
    return SolverConfig(
        dt=float(solver["dt"]),
        scheme=solver.get("scheme", "semi-implicit"),
        newton_tol=float(solver.get("newton_tol", 1e-8)),
        newton_max_iter=int(solver.get("newton_max_iter", 25)),
        record_every=int(solver.get("record_every", 1)),
    )


def _run_one_path(scenario: dict, master_seed: int, path_index: int,
                  record_every: int) -> Trajectory:
    """One stochastic path on stream path_index + 1 (stream 0 is reserved
    for the deterministic reference / shared setup)."""
    model = model_from_scenario(scenario)
    cfg = replace(_solver_config_from(scenario), record_every=record_every)
    rng = RngStream(master_seed, path_index + 1)
    init = find_consistent_init(
        model, scenario.get("initial", {}), mode="stochastic", rng=rng
    )
    return simulate(
        model,
        init,
        horizon=float(scenario["horizon"]),
        cfg=cfg,
        mode="stochastic",
        rng=rng,
    )


def _path_task(args):
    scenario, seed, index, record_every = args
    try:
        return index, _run_one_path(scenario, seed, index, record_every), None
    except NumericalError as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def default_deviation_burn_in(epsilon: float) -> float:
    return 5.0 * epsilon * abs(math.log(epsilon))


def default_exit_burn_in(epsilon: float, h_grid) -> float:
    return 5.0 * epsilon * max(abs(math.log(h)) for h in h_grid)


def deviation_statistics(
    paths: list, det: Trajectory, burn_in: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-path sup-norm deviation from the deterministic reference.

    Fast block (devices + wind states) and slow block are reported
    separately; samples before burn_in are excluded so the initial
    transient does not dominate the sup.
    """
    mask = det.tau >= burn_in - 1e-12
    if not np.any(mask):
        raise ParameterError("burn-in leaves no samples to compare")
    sup_fast = np.empty(len(paths))
    sup_slow = np.empty(len(paths))
    for i, path in enumerate(paths):
        if path.tau.shape != det.tau.shape or not np.allclose(path.tau, det.tau):
            raise ParameterError("path and reference grids differ")
        dx = path.x_bar[mask] - det.x_bar[mask]
        sup_fast[i] = np.abs(dx).max() if dx.size else 0.0
        dz = path.z_c[mask] - det.z_c[mask]
        sup_slow[i] = np.abs(dz).max() if dz.size else 0.0
    return sup_fast, sup_slow


def exit_statistics(
    paths: list, tube: Tube, h_grid, burn_in: float | None = None
) -> tuple[dict, np.ndarray, float]:
    """Fraction of paths whose tube distance ever reaches each depth.

    Returns (fractions by depth, per-path sup distance, burn-in used).  A
    single burn-in (the most conservative over the grid) is applied to every
    depth so the fractions are nonincreasing in h by construction.
    """
    if len(h_grid) == 0:
        raise ParameterError("h_grid must not be empty")
    if burn_in is None:
        burn_in = default_exit_burn_in(tube.epsilon, h_grid)
    sup_rho = np.empty(len(paths))
    for i, path in enumerate(paths):
        mask = path.tau >= burn_in - 1e-12
        if not np.any(mask):
            raise ParameterError("burn-in leaves no samples to compare")
        taus = path.tau[mask]
        xs = path.x_bar[mask]
        idx = tube.indices_for(taus)
        rho2 = np.empty(taus.size)
        for j in np.unique(idx):
            sel = idx == j
            d = xs[sel] - tube.centers[j]
            w = np.linalg.solve(tube._chols[j], d.T)
            rho2[sel] = np.sum(w * w, axis=0)
        sup_rho[i] = math.sqrt(float(rho2.max()))
    fractions = {float(h): float(np.mean(sup_rho >= h)) for h in h_grid}
    return fractions, sup_rho, float(burn_in)


def run_ensemble(
    scenario: dict, cfg: EnsembleConfig
) -> tuple[Trajectory, list, EnsembleStats]:
    """Deterministic reference plus cfg.n_paths stochastic paths.

    Path failures (numerical errors) are tolerated up to
    cfg.max_failure_fraction and excluded from the statistics; beyond that
    the whole ensemble is considered invalid.
    """
    model = model_from_scenario(scenario)
    solver_cfg = replace(_solver_config_from(scenario), record_every=cfg.record_every)
    horizon = float(scenario["horizon"])
    initial = scenario.get("initial", {})

    t0 = time.perf_counter()
    det_init = find_consistent_init(model, initial, mode="deterministic")
    det = simulate(model, det_init, horizon, solver_cfg, mode="deterministic")
    det_time = time.perf_counter() - t0

    tasks = [
        (scenario, cfg.master_seed, i, cfg.record_every) for i in range(cfg.n_paths)
    ]
    workers = worker_count(cfg.n_paths)
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_path_task, tasks))
    else:
        results = [_path_task(t) for t in tasks]
    ensemble_time = time.perf_counter() - t0
    results.sort(key=lambda r: r[0])

    paths = []
    failures = []
    for index, traj, err in results:
        if err is None:
            paths.append(traj)
        else:
            failures.append((index, err))
    if cfg.n_paths > 0 and len(failures) / cfg.n_paths > cfg.max_failure_fraction:
        raise EnsembleError(
            f"{len(failures)} of {cfg.n_paths} paths failed "
            f"(limit {cfg.max_failure_fraction:.0%})",
            failures=failures,
        )
    if not paths:
        raise EnsembleError("no paths survived", failures=failures)

    dev_burn = (
        cfg.burn_in_tau
        if cfg.burn_in_tau is not None
        else default_deviation_burn_in(model.dims.epsilon)
    )
    sup_fast, sup_slow = deviation_statistics(paths, det, dev_burn)

    exit_fracs: dict = {}
    sup_rho = None
    exit_burn = None
    if cfg.h_grid:
        tube = build_tube(
            model, det, h=max(cfg.h_grid), kappa=cfg.kappa, stride=cfg.tube_stride
        )
        exit_fracs, sup_rho, exit_burn = exit_statistics(
            paths, tube, cfg.h_grid, burn_in=cfg.burn_in_tau
        )

    stats = EnsembleStats(
        n_paths=cfg.n_paths,
        n_failed=len(failures),
        failures=failures,
        sup_fast_dev=sup_fast,
        sup_slow_dev=sup_slow,
        median_sup_fast=float(np.median(sup_fast)),
        median_sup_slow=float(np.median(sup_slow)),
        deviation_burn_in=float(dev_burn),
        exit_fractions=exit_fracs,
        sup_tube_distance=sup_rho,
        exit_burn_in=exit_burn,
        timings={
            "deterministic_s": det_time,
            "ensemble_s": ensemble_time,
            "mean_path_s": ensemble_time / cfg.n_paths,
            "workers": workers,
        },
        master_seed=cfg.master_seed,
    )
    return det, paths, stats


def _fit_loglog(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Slope and 2-sigma half-width of log(y) against log(x)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        raise DegenerateFitError("need at least two sweep points to fit a slope")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise DegenerateFitError("log-log fit requires strictly positive data")
    if np.ptp(np.log(xs)) < 1e-12:
        raise DegenerateFitError("sweep values do not vary; slope undefined")
    lx, ly = np.log(xs), np.log(ys)
    if xs.size > 2:
        coeffs, cov = np.polyfit(lx, ly, 1, cov=True)
        half = 2.0 * float(np.sqrt(cov[0, 0]))
    else:
        coeffs = np.polyfit(lx, ly, 1)
        half = 0.0
    return float(coeffs[0]), half


def _derived_seed(master_seed: int, tag: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(tag, index))
    return int(ss.generate_state(1, np.uint64)[0])


def scaling_study(
    scenario: dict,
    cfg: EnsembleConfig,
    sigmas=None,
    epsilons=None,
) -> ScalingResult:
    """Sweep noise amplitude and time-scale ratio; fit deviation exponents.

    Each sweep point runs a fresh ensemble on seeds derived from
    (master_seed, sweep tag, point index), so points are statistically
    independent but fully reproducible.  In the epsilon sweep the step size
    is scaled proportionally to epsilon, keeping the per-time-scale
    resolution (and explicit-scheme stability) uniform across the sweep.
    """
    sigmas = tuple(cfg.sigma_list if sigmas is None else sigmas)
    epsilons = tuple(cfg.epsilon_list if epsilons is None else epsilons)
    fits: dict = {}
    degenerate: dict = {}
    tables: dict = {}

    def sweep(tag: int, values, patch_fn):
        med_fast, med_slow = [], []
        for i, v in enumerate(values):
            sc = patch_fn(float(v))
            sub = EnsembleConfig(
                n_paths=cfg.n_paths,
                master_seed=_derived_seed(cfg.master_seed, tag, i),
                burn_in_tau=cfg.burn_in_tau,
                max_failure_fraction=cfg.max_failure_fraction,
                record_every=cfg.record_every,
            )
            _, _, stats = run_ensemble(sc, sub)
            med_fast.append(stats.median_sup_fast)
            med_slow.append(stats.median_sup_slow)
        return np.asarray(med_fast), np.asarray(med_slow)

    if sigmas:
        def with_sigma(s: float) -> dict:
            sc = dict(scenario)
            sc["sigma"] = s
            return sc

        med_fast, med_slow = sweep(1, sigmas, with_sigma)
        tables["sigma"] = {
            "values": list(sigmas),
            "median_sup_fast": med_fast.tolist(),
            "median_sup_slow": med_slow.tolist(),
        }
        for label, med in (("sigma_fast", med_fast), ("sigma_slow", med_slow)):
            try:
                fits[label] = _fit_loglog(np.asarray(sigmas), med)
                degenerate[label] = False
            except DegenerateFitError as exc:
                degenerate[label] = True
                tables.setdefault("rejected", {})[label] = str(exc)

    if epsilons:
        base_eps = float(scenario["epsilon"])
        base_dt = float(scenario["solver"]["dt"])

        def with_epsilon(e: float) -> dict:
            sc = dict(scenario)
            sc["epsilon"] = e
            solver = dict(scenario.get("solver", {}))
            solver["dt"] = base_dt * e / base_eps
            sc["solver"] = solver
            return sc

        med_fast, med_slow = sweep(2, epsilons, with_epsilon)
        tables["epsilon"] = {
            "values": list(epsilons),
            "median_sup_fast": med_fast.tolist(),
            "median_sup_slow": med_slow.tolist(),
        }
        for label, med in (("epsilon_fast", med_fast), ("epsilon_slow", med_slow)):
            try:
                fits[label] = _fit_loglog(np.asarray(epsilons), med)
                degenerate[label] = False
            except DegenerateFitError as exc:
                degenerate[label] = True
                tables.setdefault("rejected", {})[label] = str(exc)

    if not fits and not degenerate:
        raise ParameterError("scaling_study needs at least one sweep list")
    return ScalingResult(fits=fits, degenerate=degenerate, tables=tables)


def speedup_report(stats: EnsembleStats) -> dict:
    """Wall-clock comparison of the single deterministic run vs the ensemble."""
    t = stats.timings
    det = t["deterministic_s"]
    ens = t["ensemble_s"]
    return {
        "deterministic_s": det,
        "ensemble_s": ens,
        "mean_path_s": t["mean_path_s"],
        "n_paths": stats.n_paths,
        "workers": t["workers"],
        "ensemble_over_deterministic": ens / det if det > 0 else math.inf,
        "path_over_deterministic": (
            t["mean_path_s"] / det if det > 0 else math.inf
        ),
    }
