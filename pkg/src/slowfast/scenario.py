"""Scenario documents: validation, loading, saving, running.

A scenario is a JSON mapping that pins down one experiment: which model to
build, time-scale ratio, noise amplitude, wind sources, devices, solver
settings, disturbance schedule, initial condition, and the master seed.
Validation collects every problem it can find instead of stopping at the
first, so a bad file is fixed in one pass.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from numbers import Real
from pathlib import Path
from typing import Any, Mapping

from .errors import ParameterError, ValidationError
from .fixtures import FIXTURE_NAMES, fixture_scenario, model_from_scenario
from .model import SystemModel
from .solver import (
    SCHEMES,
    RngStream,
    SolverConfig,
    Trajectory,
    find_consistent_init,
    simulate,
)

__all__ = [
    "Scenario",
    "validate_scenario",
    "load_scenario",
    "save_scenario",
    "scenario_to_json",
    "run_scenario",
]

_MODEL_NAMES = FIXTURE_NAMES + ("user",)
_DISTRIBUTIONS = ("weibull", "rayleigh")
_EXPLICIT_STEP_LIMIT = 0.2


def _is_num(v) -> bool:
    return isinstance(v, Real) and not isinstance(v, bool)


def _num_list(v) -> bool:
    return isinstance(v, (list, tuple)) and all(_is_num(x) for x in v)


def validate_scenario(data: Mapping) -> list[str]:
    """Return every validation error found in the scenario mapping."""
    errors: list[str] = []
    if not isinstance(data, Mapping):
        return ["scenario must be a JSON object"]

    def need(key, check, message):
        if key not in data:
            errors.append(f"{key} is required")
            return None
        v = data[key]
        if not check(v):
            errors.append(message.format(value=v))
            return None
        return v

    model = need(
        "model",
        lambda v: isinstance(v, str) and v in _MODEL_NAMES,
        "model must be one of " + ", ".join(_MODEL_NAMES) + " (got {value!r})",
    )
    if model == "user":
        entry = data.get("entry")
        if not (isinstance(entry, str) and ":" in entry):
            errors.append("entry must be 'module:callable' when model is 'user'")

    epsilon = need("epsilon", lambda v: _is_num(v) and v > 0, "epsilon must be > 0 (got {value})")
    need("sigma", lambda v: _is_num(v) and v >= 0, "sigma must be >= 0 (got {value})")
    need("horizon", lambda v: _is_num(v) and v > 0, "horizon must be > 0 (got {value})")
    if "seed" in data and not (isinstance(data["seed"], int) and not isinstance(data["seed"], bool) and data["seed"] >= 0):
        errors.append(f"seed must be a nonnegative integer (got {data['seed']!r})")

    solver = data.get("solver")
    dt = None
    scheme = "semi-implicit"
    if not isinstance(solver, Mapping):
        errors.append("solver must be an object with at least dt")
    else:
        if "dt" not in solver:
            errors.append("solver.dt is required")
        elif not (_is_num(solver["dt"]) and solver["dt"] > 0):
            errors.append(f"solver.dt must be > 0 (got {solver['dt']})")
        else:
            dt = float(solver["dt"])
        scheme = solver.get("scheme", "semi-implicit")
        if scheme not in SCHEMES:
            errors.append(
                "solver.scheme must be one of " + ", ".join(SCHEMES) + f" (got {scheme!r})"
            )
        if "newton_tol" in solver and not (_is_num(solver["newton_tol"]) and solver["newton_tol"] > 0):
            errors.append("solver.newton_tol must be > 0")
        if "newton_max_iter" in solver and not (
            isinstance(solver["newton_max_iter"], int) and solver["newton_max_iter"] >= 1
        ):
            errors.append("solver.newton_max_iter must be an integer >= 1")
        if "record_every" in solver and not (
            isinstance(solver["record_every"], int) and solver["record_every"] >= 1
        ):
            errors.append("solver.record_every must be an integer >= 1")
    if (
        dt is not None
        and epsilon is not None
        and scheme == "explicit"
        and dt / float(epsilon) > _EXPLICIT_STEP_LIMIT + 1e-12
    ):
        errors.append(
            f"explicit scheme requires dt/epsilon <= {_EXPLICIT_STEP_LIMIT} "
            f"(got {dt / float(epsilon):.3g})"
        )

    wind = data.get("wind_sources", [])
    if not isinstance(wind, list):
        errors.append("wind_sources must be a list of source objects")
        wind = []
    for i, src in enumerate(wind):
        tag = f"wind_sources[{i}]"
        if not isinstance(src, Mapping):
            errors.append(f"{tag} must be an object")
            continue
        if not (_is_num(src.get("alpha")) and src["alpha"] > 0):
            errors.append(f"{tag}.alpha must be > 0")
        if "beta" in src and not (_is_num(src["beta"]) and src["beta"] >= 0):
            errors.append(f"{tag}.beta must be >= 0")
        dist = src.get("distribution", "weibull")
        if dist not in _DISTRIBUTIONS:
            errors.append(
                f"{tag}.distribution must be one of " + ", ".join(_DISTRIBUTIONS)
            )
        if dist == "weibull" and not (_is_num(src.get("k")) and src["k"] > 0):
            errors.append(f"{tag}.k must be > 0")
        if dist in _DISTRIBUTIONS and not (
            _is_num(src.get("lambda")) and src["lambda"] > 0
        ):
            errors.append(f"{tag}.lambda must be > 0")
        if "seed_offset" in src and not isinstance(src["seed_offset"], int):
            errors.append(f"{tag}.seed_offset must be an integer")

    devices = data.get("devices", {})
    if not isinstance(devices, Mapping):
        errors.append("devices must be an object with loads/ltcs/wind_injections lists")
        devices = {}
    for group in devices:
        if group not in ("loads", "ltcs", "wind_injections"):
            errors.append(f"devices.{group} is not a known device group")
    for group, entries in devices.items():
        if not isinstance(entries, list) or not all(
            isinstance(e, Mapping) for e in entries
        ):
            errors.append(f"devices.{group} must be a list of objects")
            continue
        for i, dev in enumerate(entries):
            tag = f"devices.{group}[{i}]"
            for key, val in dev.items():
                if key == "name":
                    if not isinstance(val, str):
                        errors.append(f"{tag}.name must be a string")
                elif not _is_num(val):
                    errors.append(f"{tag}.{key} must be a number")
            if group == "ltcs":
                if _is_num(dev.get("delta_m")) and dev["delta_m"] <= 0:
                    errors.append(f"{tag}.delta_m must be > 0")
                if _is_num(dev.get("delay")) and dev["delay"] <= 0:
                    errors.append(f"{tag}.delay must be > 0")
                if _is_num(dev.get("d")) and dev["d"] < 0:
                    errors.append(f"{tag}.d must be >= 0")
                if (
                    _is_num(dev.get("m_min"))
                    and _is_num(dev.get("m_max"))
                    and _is_num(dev.get("m"))
                    and not (dev["m_min"] <= dev["m"] <= dev["m_max"])
                ):
                    errors.append(f"{tag}: m must lie within [m_min, m_max]")
            elif group == "loads":
                for key in ("T_p", "T_q"):
                    if _is_num(dev.get(key)) and dev[key] <= 0:
                        errors.append(f"{tag}.{key} must be > 0")
            elif group == "wind_injections":
                if _is_num(dev.get("rated_power")) and dev["rated_power"] < 0:
                    errors.append(f"{tag}.rated_power must be >= 0")
                speeds = [dev.get("cut_in"), dev.get("rated_speed"), dev.get("cut_out")]
                if all(_is_num(s) for s in speeds) and not (
                    0 <= speeds[0] < speeds[1] < speeds[2]
                ):
                    errors.append(
                        f"{tag}: speeds must satisfy 0 <= cut_in < rated_speed < cut_out"
                    )

    disturbances = data.get("disturbances", [])
    if not isinstance(disturbances, list):
        errors.append("disturbances must be a list")
        disturbances = []
    for i, ev in enumerate(disturbances):
        tag = f"disturbances[{i}]"
        if not isinstance(ev, Mapping):
            errors.append(f"{tag} must be an object")
            continue
        if not (_is_num(ev.get("time")) and ev["time"] >= 0):
            errors.append(f"{tag}.time must be >= 0")
        patch = ev.get("set")
        if not (isinstance(patch, Mapping) and patch and all(_is_num(v) for v in patch.values())):
            errors.append(f"{tag}.set must be a nonempty object of numeric values")

    initial = data.get("initial", {})
    if not isinstance(initial, Mapping):
        errors.append("initial must be an object")
    else:
        for key in ("z_c", "x", "y_guess", "z_d"):
            if key in initial and not _num_list(initial[key]):
                errors.append(f"initial.{key} must be a list of numbers")
        if "tau" in initial and not _is_num(initial["tau"]):
            errors.append("initial.tau must be a number")

    params = data.get("params", {})
    if not isinstance(params, Mapping):
        errors.append("params must be an object")
    elif not all(_is_num(v) for v in params.values()):
        errors.append("params values must be numbers")

    return errors


@dataclass(frozen=True)
class Scenario:
    """A validated scenario document."""

    data: dict

    @property
    def name(self) -> str:
        return self.data.get("name", "unnamed")

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def horizon(self) -> float:
        return float(self.data["horizon"])

    def __getitem__(self, key: str):
        return self.data[key]

    def get(self, key: str, default=None):
        return self.data.get(key, default)

    def build_model(self) -> SystemModel:
        return model_from_scenario(self.data)

    def solver_config(self, **overrides) -> SolverConfig:
        unknown = set(overrides) - {
            "dt", "scheme", "newton_tol", "newton_max_iter", "record_every",
        }
        if unknown:
            raise ParameterError(
                f"unknown solver override(s): {', '.join(sorted(unknown))}"
            )
        solver = dict(self.data.get("solver", {}))
        solver.update(overrides)
        return SolverConfig(
            dt=float(solver["dt"]),
            scheme=solver.get("scheme", "semi-implicit"),
            newton_tol=float(solver.get("newton_tol", 1e-8)),
            newton_max_iter=int(solver.get("newton_max_iter", 25)),
            record_every=int(solver.get("record_every", 1)),
        )


def scenario_from_mapping(data: Mapping, source: str = "scenario") -> Scenario:
    errors = validate_scenario(data)
    if errors:
        raise ValidationError(f"{source}: {len(errors)} validation error(s)", errors=errors)
    return Scenario(data=json.loads(scenario_to_json(data)))


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario from a JSON file or resolve a builtin fixture name."""
    name = str(path_or_name)
    if name in FIXTURE_NAMES:
        return scenario_from_mapping(fixture_scenario(name), source=name)
    path = Path(path_or_name)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(
            f"cannot read scenario {path}: {exc}",
            errors=[str(exc)],
        ) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        msg = f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        raise ValidationError(msg, errors=[msg]) from exc
    return scenario_from_mapping(data, source=str(path))


def scenario_to_json(data: Mapping) -> str:
    """Canonical serialization: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def save_scenario(scenario: Scenario | Mapping, path: str | Path) -> Path:
    data = scenario.data if isinstance(scenario, Scenario) else dict(scenario)
    errors = validate_scenario(data)
    if errors:
        raise ValidationError(
            f"refusing to save invalid scenario: {len(errors)} error(s)", errors=errors
        )
    path = Path(path)
    path.write_text(scenario_to_json(data), encoding="utf-8")
    return path


def run_scenario(
    scenario: Scenario | Mapping,
    mode: str = "deterministic",
    stream_index: int = 1,
    **config_overrides,
) -> Trajectory:
    """Build, initialize, and integrate a scenario in one call.

    Stochastic runs draw from stream ``stream_index`` of the scenario seed
    (ensemble paths use streams 1..n, keeping single runs reproducible
    against ensemble member 0 when stream_index=1).  ``horizon`` and
    ``seed`` overrides patch the scenario; any other override must be a
    solver setting.
    """
    sc = scenario if isinstance(scenario, Scenario) else scenario_from_mapping(scenario)
    patch = {
        key: config_overrides.pop(key)
        for key in ("horizon", "seed")
        if key in config_overrides
    }
    if patch:
        data = dict(sc.data)
        data.update(patch)
        sc = Scenario(data)
    model = sc.build_model()
    cfg = sc.solver_config(**config_overrides)
    rng = RngStream(sc.seed, stream_index) if mode == "stochastic" else None
    init = find_consistent_init(model, sc.get("initial", {}), mode=mode, rng=rng)
    return simulate(model, init, sc.horizon, cfg, mode=mode, rng=rng)
