"""Built-in systems and the shipped fixture scenarios.

Three fixtures cover the feature matrix:

* ``linear-slowfast``: one slow, one fast, one algebraic and one wind state
  with purely linear coupling.  Every analytic quantity (manifold, tube,
  deviation laws) is known in closed form, so this is the workhorse for
  verification.
* ``ou-only``: a single latent wind state and its speed output, nothing
  else.  Exit statistics against the concentration tube are exact here.
* ``bus-model``: a single-bus voltage-stability story: stiff EMF dynamics,
  an exponential-recovery load, a load tap changer, a wind injection, and a
  line-loss parameter switch.
"""
from __future__ import annotations

import copy
import importlib
from dataclasses import replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ParameterError
from .model import (
    LtcDevice,
    ModelDims,
    RecoveryLoad,
    SystemModel,
    WindInjection,
    ltc_step,
    wind_power_injection,
)
from .wind import OuParams, WeibullParams, WindSourceSpec, target_distribution

__all__ = [
    "FIXTURE_NAMES",
    "fixture_scenario",
    "model_from_scenario",
    "linear_slowfast_model",
    "ou_only_model",
    "bus_model",
]

FIXTURE_NAMES = ("linear-slowfast", "ou-only", "bus-model")

# Latent decay of the bus-model wind source, 1/s (hours-scale correlation).
BUS_WIND_ALPHA = 0.2575 / 3600.0


def wind_sources_from_config(entries: Sequence[Mapping]) -> tuple[WindSourceSpec, ...]:
    out = []
    for w in entries:
        dist = w.get("distribution", "weibull")
        kwargs = {"lam": w["lambda"]}
        if dist == "weibull":
            kwargs["k"] = w["k"]
        out.append(
            WindSourceSpec(
                ou=OuParams(alpha=w["alpha"], beta=w.get("beta", 0.0)),
                target=target_distribution(dist, **kwargs),
                seed_offset=int(w.get("seed_offset", 0)),
            )
        )
    return tuple(out)


def _disturbances_from_config(entries: Sequence[Mapping]) -> tuple:
    return tuple((float(d["time"]), dict(d["set"])) for d in entries or ())


def linear_slowfast_model(
    epsilon: float = 0.01,
    sigma: float = 0.1,
    params: Mapping | None = None,
    wind_sources: tuple[WindSourceSpec, ...] | None = None,
    disturbances: tuple = (),
) -> SystemModel:
    """Fully linear test system.

    Slow variable relaxes toward zero while tracking the latent wind state;
    the fast device variable tracks the slow one; the algebraic variable
    mirrors the fast one.  Exact slow manifold: x* = z, eta* = 0; exact
    invariant manifold: x = z / (1 - epsilon).
    """
    p = {"a_slow": 1.0, "c_wind": 1.0, "a_fast": 1.0}
    p.update(params or {})
    wind = wind_sources or (
        WindSourceSpec(
            ou=OuParams(alpha=1.0, beta=sigma),
            target=WeibullParams(k=1.51, lam=3.36),
        ),
    )
    if len(wind) != 1:
        raise ParameterError("linear-slowfast uses exactly one wind source")

    def slow(z_c, x_bar, y_bar, z_d, prm):
        return np.array([-prm["a_slow"] * z_c[0] + prm["c_wind"] * x_bar[1]])

    def fast(z_c, x_bar, y_bar, z_d, prm):
        return np.array([-prm["a_fast"] * (x_bar[0] - z_c[0])])

    def alg(z_c, x_bar, y_bar, z_d, prm):
        return np.array([y_bar[0] - x_bar[0]])

    return SystemModel(
        dims=ModelDims(n_zc=1, n_x=1, n_y=1, n_zd=0, n_w=1, epsilon=epsilon),
        slow_rhs=slow,
        fast_rhs=fast,
        algebraic=alg,
        wind=wind,
        sigma=sigma,
        params=p,
        disturbances=disturbances,
        labels={
            "z_c": ["z"],
            "x_bar": ["x", "eta_w1"],
            "y_bar": ["y", "wind_speed1"],
            "z_d": [],
        },
    )


def ou_only_model(
    epsilon: float = 0.01,
    sigma: float = 0.2,
    params: Mapping | None = None,
    wind_sources: tuple[WindSourceSpec, ...] | None = None,
    disturbances: tuple = (),
) -> SystemModel:
    """Pure wind: one latent state and its speed output."""
    wind = wind_sources or (
        WindSourceSpec(
            ou=OuParams(alpha=1.0, beta=sigma),
            target=WeibullParams(k=1.51, lam=3.36),
        ),
    )
    labels = {
        "z_c": [],
        "x_bar": [f"eta_w{i + 1}" for i in range(len(wind))],
        "y_bar": [f"wind_speed{i + 1}" for i in range(len(wind))],
        "z_d": [],
    }
    return SystemModel(
        dims=ModelDims(n_zc=0, n_x=0, n_y=0, n_zd=0, n_w=len(wind), epsilon=epsilon),
        wind=wind,
        sigma=sigma,
        params=dict(params or {}),
        disturbances=disturbances,
        labels=labels,
    )


_BUS_PARAM_DEFAULTS = {
    "e_set": 1.05,  # EMF setpoint, pu
    "k_v": 0.5,  # EMF voltage-feedback gain
    "v_ref": 1.0,  # feedback reference voltage, pu
    "r_p": 0.06,  # net real-power voltage sensitivity (line strength)
    "r_q": 0.04,  # net reactive-power voltage sensitivity
    "s_base": 100.0,  # MVA base for the wind injection
}

_BUS_LOAD_DEFAULTS = {
    "T_p": 20.0,
    "T_q": 20.0,
    "p_s": 1.0,
    "q_s": 0.3,
    "p_t": 1.0,
    "q_t": 0.3,
    "exp_static": 0.0,
    "exp_transient": 2.0,
}

_BUS_LTC_DEFAULTS = {
    "m": 1.0,
    "delta_m": 0.0125,
    "m_min": 0.85,
    "m_max": 1.1,
    "v0": 0.98,
    "d": 0.02,
    "delay": 20.0,
    "monitor": 0,
}

_BUS_INJECTION_DEFAULTS = {
    "cut_in": 4.0,
    "rated_speed": 25.0,
    "cut_out": 35.0,
    "rated_power": 50.0,
    "source": 0,
}


def bus_model(
    epsilon: float = 0.01,
    sigma: float = 0.05,
    params: Mapping | None = None,
    wind_sources: tuple[WindSourceSpec, ...] | None = None,
    disturbances: tuple = (),
    devices: Mapping | None = None,
) -> SystemModel:
    """Single-bus voltage-stability system.

    Variables: z_c = (x_p, x_q) load recovery states, x = (e,) EMF,
    y = (v,) bus voltage, z_d = (tap, tap timer), one wind source.  The
    network row balances the LTC-transformed EMF against the voltage drop
    from the net load:

        e / m - v - r_p (p_load - p_wind) - r_q q_load = 0.
    """
    p = dict(_BUS_PARAM_DEFAULTS)
    p.update(params or {})
    devices = devices or {}

    def _device(key, defaults, overrides_list):
        cfg = dict(defaults)
        entries = devices.get(overrides_list) or []
        if entries:
            cfg.update({k: v for k, v in entries[0].items() if k != "name"})
        return cfg

    load_cfg = _device("load", _BUS_LOAD_DEFAULTS, "loads")
    ltc_cfg = _device("ltc", _BUS_LTC_DEFAULTS, "ltcs")
    inj_cfg = _device("inj", _BUS_INJECTION_DEFAULTS, "wind_injections")

    load = RecoveryLoad(**load_cfg)
    inj = WindInjection(
        cut_in=inj_cfg["cut_in"],
        rated_speed=inj_cfg["rated_speed"],
        cut_out=inj_cfg["cut_out"],
        rated_power=inj_cfg["rated_power"],
    )

    wind = wind_sources or (
        WindSourceSpec(
            ou=OuParams(alpha=BUS_WIND_ALPHA, beta=sigma),
            target=WeibullParams(k=5.0, lam=20.0),
        ),
    )
    if len(wind) != 1:
        raise ParameterError("bus-model uses exactly one wind source")

    first_disturbance = min((t for t, _ in disturbances), default=0.0)
    ltc_template = LtcDevice(
        m=ltc_cfg["m"],
        delta_m=ltc_cfg["delta_m"],
        m_min=ltc_cfg["m_min"],
        m_max=ltc_cfg["m_max"],
        v0=ltc_cfg["v0"],
        d=ltc_cfg["d"],
        delay=ltc_cfg["delay"],
        next_event_time=first_disturbance + ltc_cfg["delay"],
        monitor=int(ltc_cfg["monitor"]),
    )

    def _net_power(z_c, y_bar, prm):
        v = y_bar[0]
        p_wind = wind_power_injection(y_bar[1], inj) / prm["s_base"]
        p_load = load.real_power(z_c[0], v)
        q_load = load.reactive_power(z_c[1], v)
        return v, p_load, q_load, p_wind

    def slow(z_c, x_bar, y_bar, z_d, prm):
        v = y_bar[0]
        return np.array([load.xp_rate(z_c[0], v), load.xq_rate(z_c[1], v)])

    def fast(z_c, x_bar, y_bar, z_d, prm):
        v = y_bar[0]
        return np.array([prm["e_set"] - x_bar[0] + prm["k_v"] * (prm["v_ref"] - v)])

    def alg(z_c, x_bar, y_bar, z_d, prm):
        v, p_load, q_load, p_wind = _net_power(z_c, y_bar, prm)
        m = z_d[0]
        return np.array(
            [x_bar[0] / m - v - prm["r_p"] * (p_load - p_wind) - prm["r_q"] * q_load]
        )

    def discrete(z_c, x_bar, y_bar, z_d, prm, now):
        dev = replace(ltc_template, m=z_d[0], next_event_time=z_d[1])
        new = ltc_step(dev, v=y_bar[dev.monitor], now=now)
        events = []
        if new.m != dev.m:
            events.append((now, "ltc", dev.m, new.m))
        return np.array([new.m, new.next_event_time]), events

    return SystemModel(
        dims=ModelDims(n_zc=2, n_x=1, n_y=1, n_zd=2, n_w=1, epsilon=epsilon),
        slow_rhs=slow,
        fast_rhs=fast,
        algebraic=alg,
        discrete_update=discrete,
        wind=wind,
        sigma=sigma,
        params=p,
        disturbances=disturbances,
        labels={
            "z_c": ["x_p", "x_q"],
            "x_bar": ["e", "eta_w1"],
            "y_bar": ["v", "wind_speed1"],
            "z_d": ["tap1", "tap1_timer"],
        },
    )


def _resolve_user_entry(entry: str):
    if ":" not in entry:
        raise ParameterError(
            f"user model entry must look like 'package.module:callable', got {entry!r}"
        )
    mod_name, _, attr = entry.partition(":")
    try:
        mod = importlib.import_module(mod_name)
    except ImportError as exc:
        raise ParameterError(f"cannot import user model module {mod_name!r}: {exc}")
    try:
        return getattr(mod, attr)
    except AttributeError:
        raise ParameterError(f"module {mod_name!r} has no attribute {attr!r}")


def model_from_scenario(sc: Mapping) -> SystemModel:
    """Build the SystemModel declared by a (validated) scenario mapping."""
    kind = sc.get("model", sc.get("name"))
    if kind == "user":
        builder = _resolve_user_entry(sc["entry"])
        model = builder(sc)
        if not isinstance(model, SystemModel):
            raise ParameterError("user model entry did not return a SystemModel")
        return model
    wind = wind_sources_from_config(sc.get("wind_sources", []))
    common = dict(
        epsilon=float(sc["epsilon"]),
        sigma=float(sc.get("sigma", 0.0)),
        params=sc.get("params"),
        wind_sources=wind or None,
        disturbances=_disturbances_from_config(sc.get("disturbances")),
    )
    if kind == "linear-slowfast":
        return linear_slowfast_model(**common)
    if kind == "ou-only":
        return ou_only_model(**common)
    if kind == "bus-model":
        return bus_model(devices=sc.get("devices"), **common)
    raise ParameterError(f"unknown model kind {kind!r}")


_FIXTURES = {
    "linear-slowfast": {
        "name": "linear-slowfast",
        "model": "linear-slowfast",
        "epsilon": 0.01,
        "sigma": 0.1,
        "horizon": 2.0,
        "params": {"a_slow": 1.0, "c_wind": 1.0, "a_fast": 1.0},
        "wind_sources": [
            {
                "alpha": 1.0,
                "beta": 0.1,
                "distribution": "weibull",
                "k": 1.51,
                "lambda": 3.36,
                "seed_offset": 0,
            }
        ],
        "initial": {"z_c": [1.0], "x": [1.0], "y_guess": [1.0, 3.0]},
        "solver": {
            "dt": 0.002,
            "scheme": "explicit",
            "newton_tol": 1e-08,
            "newton_max_iter": 25,
            "record_every": 1,
        },
    },
    "ou-only": {
        "name": "ou-only",
        "model": "ou-only",
        "epsilon": 0.01,
        "sigma": 0.2,
        "horizon": 1.0,
        "wind_sources": [
            {
                "alpha": 1.0,
                "beta": 0.2,
                "distribution": "weibull",
                "k": 1.51,
                "lambda": 3.36,
                "seed_offset": 0,
            }
        ],
        "initial": {},
        "solver": {
            "dt": 0.001,
            "scheme": "explicit",
            "newton_tol": 1e-08,
            "newton_max_iter": 25,
            "record_every": 1,
        },
    },
    "bus-model": {
        "name": "bus-model",
        "model": "bus-model",
        "epsilon": 0.01,
        "sigma": 0.05,
        "horizon": 400.0,
        "params": dict(_BUS_PARAM_DEFAULTS),
        "wind_sources": [
            {
                "alpha": BUS_WIND_ALPHA,
                "beta": 0.05,
                "distribution": "weibull",
                "k": 5.0,
                "lambda": 20.0,
                "seed_offset": 0,
            }
        ],
        "devices": {
            "loads": [dict(_BUS_LOAD_DEFAULTS, name="load1")],
            "ltcs": [dict(_BUS_LTC_DEFAULTS, name="ltc1")],
            "wind_injections": [dict(_BUS_INJECTION_DEFAULTS, name="wt1")],
        },
        "disturbances": [{"time": 5.0, "set": {"r_p": 0.12, "r_q": 0.08}}],
        # consistent pre-disturbance equilibrium; z_d = (tap, first event time)
        "initial": {
            "z_c": [0.25901874553685866, 0.07770562366105738],
            "x": [1.0532482856790635],
            "y_guess": [0.9935034286418729, 18.586391802632104],
            "z_d": [1.0, 25.0],
        },
        "solver": {
            "dt": 0.1,
            "scheme": "semi-implicit",
            "newton_tol": 1e-08,
            "newton_max_iter": 25,
            "record_every": 1,
        },
    },
}


def fixture_scenario(name: str) -> dict:
    """Fresh copy of a shipped fixture scenario."""
    if name not in _FIXTURES:
        raise ParameterError(
            f"unknown fixture {name!r}; available: {', '.join(FIXTURE_NAMES)}"
        )
    return copy.deepcopy(_FIXTURES[name])
