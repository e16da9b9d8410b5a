"""Command line front end.

Subcommands:
  fixtures        list builtin scenarios
  wind-gen        sample a wind speed path and summarize its statistics
  simulate        integrate one scenario (deterministic or stochastic)
  ensemble        Monte Carlo run with deviation and tube exit statistics
  manifold        slow-manifold stability scan and tube cross-section
  verify-scaling  sweep noise amplitude / time-scale ratio, fit exponents

Exit codes: 0 success, 1 bad input (arguments, scenario validation),
2 numerical failure (divergence, singular network, ensemble over the
failure budget).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import EnsembleConfig, run_ensemble, scaling_study, speedup_report
from .errors import NumericalError, SlowFastError, ValidationError
from .fixtures import FIXTURE_NAMES, fixture_scenario, wind_sources_from_config
from .manifold import build_tube, solve_cross_section, verify_uniform_stability
from .output import (
    emit_plot_data,
    save_stats,
    save_trajectory,
    save_wind_series,
    scenario_hash,
)
from .scenario import Scenario, load_scenario, run_scenario, save_scenario
from .solver import RngStream
from .wind import (
    OuParams,
    WeibullParams,
    WindSourceSpec,
    estimate_autocorrelation,
    estimate_moments,
    fit_decay_rate,
    generate_wind_series,
    target_distribution,
)

_FIXTURE_BLURBS = {
    "linear-slowfast": "one slow, one fast, one wind state; closed-form checks",
    "ou-only": "pure wind driver, no devices; tube statistics fixture",
    "bus-model": "single bus with recovery load, stiff EMF, tap changer, wind",
}


class _Parser(argparse.ArgumentParser):
    """argparse, but argument problems exit with code 1 (not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _zc_grid(text: str) -> list[np.ndarray]:
    """Grid spec: per-component axes joined by ';', each 'lo:hi:n' or a number.

    '0.1:0.4:4;0.07' expands to the cartesian product of linspace(0.1,0.4,4)
    and the single value 0.07.
    """
    axes = []
    try:
        for part in text.split(";"):
            part = part.strip()
            if not part:
                continue
            if ":" in part:
                lo, hi, num = part.split(":")
                axes.append(np.linspace(float(lo), float(hi), int(num)))
            else:
                axes.append(np.asarray([float(part)]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"bad grid spec {text!r}: use lo:hi:n or a number per component"
        ) from exc
    if not axes:
        raise argparse.ArgumentTypeError("empty grid spec")
    mesh = np.meshgrid(*axes, indexing="ij")
    return list(np.column_stack([m.ravel() for m in mesh]))


def _emit(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _config_echo(args) -> dict:
    return {key: val for key, val in vars(args).items() if key != "func"}


def _load(name_or_path: str) -> Scenario:
    return load_scenario(name_or_path)


def _pick_source(sources, index: int, origin: str):
    if not sources:
        raise ValidationError(
            f"{origin} declares no wind sources", errors=["wind source list empty"]
        )
    if not 0 <= index < len(sources):
        raise ValidationError(
            f"--source {index} out of range ({origin} has {len(sources)})",
            errors=["source index out of range"],
        )
    return sources[index]


def cmd_fixtures(args) -> int:
    if args.json:
        doc = {name: fixture_scenario(name) for name in FIXTURE_NAMES}
        print(json.dumps(doc, indent=2, sort_keys=True))
        return 0
    if args.write:
        outdir = Path(args.write)
        outdir.mkdir(parents=True, exist_ok=True)
        for name in FIXTURE_NAMES:
            save_scenario(fixture_scenario(name), outdir / f"{name}.json")
            print(f"wrote {outdir / (name + '.json')}")
        return 0
    for name in FIXTURE_NAMES:
        print(f"{name:16s} {_FIXTURE_BLURBS.get(name, '')}")
    return 0


def _wind_spec_entries(path: Path):
    """Bare wind-source file: one source object or a list of them.

    Returns None when the file holds a full scenario (has a "model" key),
    so the caller falls back to the scenario loader.
    """
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}", errors=[str(exc)])
    if isinstance(raw, dict) and "model" not in raw:
        raw = [raw]
    if isinstance(raw, list):
        problems = [
            f"source {i}: missing required key {key!r}"
            for i, entry in enumerate(raw)
            for key in ("alpha", "lambda")
            if not isinstance(entry, dict) or key not in entry
        ]
        if problems:
            raise ValidationError(f"{path}: bad wind source spec", errors=problems)
        return raw
    return None


def cmd_wind_gen(args) -> int:
    entries = None
    if args.spec:
        path = Path(args.spec)
        if path.is_file() and args.spec not in FIXTURE_NAMES:
            entries = _wind_spec_entries(path)
    if entries is not None:
        sources = wind_sources_from_config(entries)
        seed = args.seed if args.seed is not None else 0
        spec = _pick_source(sources, args.source, args.spec)
        ou, target = spec.ou, spec.target
    elif args.spec:
        sc = _load(args.spec)
        sources = wind_sources_from_config(sc.get("wind_sources", []))
        spec = _pick_source(sources, args.source, sc.name)
        ou, target = spec.ou, spec.target
        seed = args.seed if args.seed is not None else sc.seed
    else:
        ou = OuParams(alpha=args.alpha, beta=args.beta)
        lam = getattr(args, "lambda")
        if args.distribution == "rayleigh":
            target = WeibullParams.rayleigh(lam)
        else:
            target = target_distribution("weibull", k=args.k, lam=lam)
        seed = args.seed if args.seed is not None else 0
    spec = WindSourceSpec(ou=ou, target=target)
    series = generate_wind_series(
        spec, horizon=args.horizon, dt=args.dt, rng=RngStream(seed, args.stream)
    )
    if args.out:
        save_wind_series(series, args.out)
    mean, var = estimate_moments(series.values)
    summary = {
        "samples": int(series.values.size),
        "dt_s": args.dt,
        "mean_mps": mean,
        "variance": var,
        "target_mean_mps": target.mean(),
        "target_variance": target.variance(),
        "ou_alpha": ou.alpha,
        "ou_stationary_std": ou.stationary_std,
        "seed": seed,
    }
    if args.fit_decay:
        max_lag = min(200, series.values.size // 10 - 1)
        corr = estimate_autocorrelation(series.eta_values, max_lag)
        summary["fitted_alpha"] = fit_decay_rate(corr, args.dt)
    _emit(summary, args.stats_out)
    return 0


def cmd_simulate(args) -> int:
    sc = _load(args.scenario)
    overrides = {}
    if args.record_every is not None:
        overrides["record_every"] = args.record_every
    if args.dt is not None:
        overrides["dt"] = args.dt
    sc_data = dict(sc.data)
    if args.horizon is not None:
        sc_data["horizon"] = args.horizon
    if args.seed is not None:
        sc_data["seed"] = args.seed
    mode = "stochastic" if args.mode.startswith("stoch") else "deterministic"
    traj = run_scenario(
        Scenario(sc_data), mode=mode, stream_index=args.stream, **overrides
    )
    if args.out:
        save_trajectory(traj, args.out)
    final = traj.final_state()
    summary = {
        "scenario": sc.name,
        "scenario_sha256": scenario_hash(sc_data),
        "mode": mode,
        "samples": len(traj),
        "final_tau": final.tau,
        "final_slow": final.z_c.tolist(),
        "final_fast": final.x_bar.tolist(),
        "final_algebraic": final.y_bar.tolist(),
        "final_discrete": final.z_d.tolist(),
        "events": [
            {"tau": tau, "kind": kind, "detail": str(detail)}
            for tau, kind, *detail in traj.event_log
        ],
        "seed": traj.seed[0] if traj.seed else None,
        "stream": traj.seed[1] if traj.seed else None,
    }
    if args.stats_out:
        save_stats(summary, args.stats_out, scenario=sc_data)
    else:
        _emit(summary, None)
    return 0


def cmd_ensemble(args) -> int:
    sc = _load(args.scenario)
    cfg = EnsembleConfig(
        n_paths=args.paths,
        master_seed=args.seed if args.seed is not None else sc.seed,
        h_grid=tuple(args.h_grid or ()),
        burn_in_tau=args.burn_in,
        tube_stride=args.tube_stride,
        record_every=args.record_every or 1,
    )
    det, paths, stats = run_ensemble(sc.data, cfg)
    doc = {
        "scenario": sc.name,
        "n_paths": stats.n_paths,
        "n_failed": stats.n_failed,
        "median_sup_fast_dev": stats.median_sup_fast,
        "median_sup_slow_dev": stats.median_sup_slow,
        "deviation_burn_in": stats.deviation_burn_in,
        "exit_fractions": {str(h): f for h, f in stats.exit_fractions.items()},
        "exit_burn_in": stats.exit_burn_in,
        "speedup": speedup_report(stats),
        "master_seed": stats.master_seed,
    }
    if args.plot_dir:
        tube = None
        if cfg.h_grid:
            model = sc.build_model()
            tube = build_tube(
                model, det, h=max(cfg.h_grid), kappa=cfg.kappa, stride=cfg.tube_stride
            )
        emit_plot_data(args.plot_dir, det, stoch=paths[0] if paths else None, tube=tube)
    if args.out:
        save_stats(doc, args.out, scenario=sc.data, config=_config_echo(args))
    else:
        _emit(doc, None)
    return 0


def cmd_manifold(args) -> int:
    sc = _load(args.scenario)
    model = sc.build_model()
    z_points = [np.asarray(z, dtype=float) for z in (args.z or [])]
    if args.zc_grid is not None:
        z_points.extend(args.zc_grid)
    if not z_points:
        z0 = sc.get("initial", {}).get("z_c")
        if z0 is None:
            raise ValidationError(
                "no slow state given: pass --z or --zc-grid, "
                "or set initial.z_c in the scenario",
                errors=["missing slow state"],
            )
        z_points = [np.asarray(z0, dtype=float)]
    z_d = sc.get("initial", {}).get("z_d")
    guess = sc.get("initial", {}).get("x")
    if guess is not None and len(guess) != model.dims.n_xbar:
        guess = list(guess) + [0.0] * (model.dims.n_xbar - len(guess))
    report = verify_uniform_stability(model, np.vstack(z_points), z_d=z_d, guess=guess)
    points_doc = []
    for p in report.points:
        entry = {
            "z_c": p.z_c.tolist(),
            "x_star": p.x_star.tolist(),
            "eigenvalues_re": p.eigenvalues.real.tolist(),
            "eigenvalues_im": p.eigenvalues.imag.tolist(),
            "margin": p.margin,
            "stability": p.stability,
            "cross_section_diag": None,
            "condition_number": None,
        }
        if p.stability == "stable":
            try:
                sect = solve_cross_section(model, p, kappa=args.kappa)
            except NumericalError as exc:
                entry["cross_section_error"] = str(exc)
            else:
                entry["cross_section_diag"] = np.diag(sect).tolist()
                entry["condition_number"] = float(np.linalg.cond(sect))
        points_doc.append(entry)
    doc = {
        "scenario": sc.name,
        "points": points_doc,
        "failures": [
            {"z_c": z.tolist(), "error": msg} for z, msg in report.failures
        ],
        "all_stable": report.all_stable,
        "worst_margin": report.worst_margin,
    }
    if args.tube and report.points:
        pt = report.points[0]
        sect = solve_cross_section(model, pt, kappa=args.kappa)
        doc["cross_section"] = {
            "h": args.h,
            "half_widths": (args.h * np.sqrt(np.diag(sect))).tolist(),
            "matrix": sect.tolist(),
        }
    _emit(doc, args.out)
    return 0


def cmd_verify_scaling(args) -> int:
    sc = _load(args.scenario)
    cfg = EnsembleConfig(
        n_paths=args.paths,
        master_seed=args.seed if args.seed is not None else sc.seed,
        burn_in_tau=args.burn_in,
    )
    result = scaling_study(
        sc.data, cfg, sigmas=args.sigmas or None, epsilons=args.epsilons or None
    )
    doc = {
        "scenario": sc.name,
        "fits": {
            key: {"exponent": expo, "half_width": half}
            for key, (expo, half) in result.fits.items()
        },
        "degenerate": result.degenerate,
        "tables": result.tables,
        "expected": {"sigma_fast": 1.0, "epsilon_slow": 0.5},
    }
    checks = {}
    if "sigma_fast" in result.fits:
        checks["sigma_fast_within_tol"] = (
            abs(result.fits["sigma_fast"][0] - 1.0) <= args.tol
        )
    if "epsilon_slow" in result.fits:
        checks["epsilon_slow_within_tol"] = (
            abs(result.fits["epsilon_slow"][0] - 0.5) <= args.tol
        )
    doc["checks"] = checks
    if args.out:
        save_stats(doc, args.out, scenario=sc.data, config=_config_echo(args))
    else:
        _emit(doc, None)
    return 0 if all(checks.values()) else 1


def build_parser() -> _Parser:
    parser = _Parser(prog="slowfast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"slowfast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", parents=[], help="list builtin scenarios")
    p.add_argument("--json", action="store_true", help="dump fixture scenarios as JSON")
    p.add_argument("--write", metavar="DIR", help="write fixture scenario files to DIR")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("wind-gen", help="generate a wind speed sample path")
    p.add_argument(
        "--spec",
        "--scenario",
        dest="spec",
        help="wind source spec file, scenario file, or fixture name",
    )
    p.add_argument("--source", type=int, default=0, help="wind source index in the spec")
    p.add_argument("--alpha", type=float, default=0.2575 / 3600, help="OU mean-reversion rate (1/s)")
    p.add_argument("--beta", type=float, default=1.0, help="OU noise amplitude")
    p.add_argument("--distribution", choices=("weibull", "rayleigh"), default="weibull")
    p.add_argument("--k", type=float, default=1.51, help="Weibull shape")
    p.add_argument("--lambda", type=float, default=3.36, help="scale of the target marginal (m/s)")
    p.add_argument("--horizon", type=float, required=True, help="length of the series (s)")
    p.add_argument("--dt", type=float, required=True, help="sample spacing (s)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--fit-decay", action="store_true", help="fit the OU rate from the sample")
    p.add_argument("--out", help="CSV output path for the series")
    p.add_argument("--stats-out", help="JSON output path for the summary")
    p.set_defaults(func=cmd_wind_gen)

    p = sub.add_parser("simulate", help="integrate one scenario")
    p.add_argument("--scenario", required=True, help="scenario file or fixture name")
    p.add_argument(
        "--mode",
        choices=("det", "stoch", "deterministic", "stochastic"),
        default="det",
        help="deterministic (default) or stochastic integration",
    )
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--stream", type=int, default=1, help="RNG stream for stochastic mode")
    p.add_argument("--horizon", type=float, default=None, help="override scenario horizon")
    p.add_argument("--dt", type=float, default=None, help="override solver step")
    p.add_argument("--record-every", type=int, default=None, help="keep every Nth sample")
    p.add_argument("--out", help="trajectory CSV path")
    p.add_argument("--stats-out", help="summary JSON path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ensemble", help="Monte Carlo ensemble of one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--h-grid", type=_float_list, default=None, help="tube depths, e.g. 0.5,0.6,0.7")
    p.add_argument("--burn-in", type=float, default=None, help="discard samples before this tau")
    p.add_argument("--tube-stride", type=int, default=10)
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--plot-dir", help="write per-variable plot CSVs here")
    p.add_argument("--out", "--stats-out", dest="out", help="stats JSON path")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("manifold", help="slow-manifold stability scan")
    p.add_argument("--scenario", required=True)
    p.add_argument(
        "--z",
        action="append",
        type=_float_list,
        help="slow state to probe (repeatable, comma separated components)",
    )
    p.add_argument(
        "--zc-grid",
        type=_zc_grid,
        default=None,
        help="slow-state grid, per-component lo:hi:n or value joined by ';'",
    )
    p.add_argument("--tube", action="store_true", help="also report the full cross-section matrix")
    p.add_argument("--h", type=float, default=3.0, help="tube depth for half-width report")
    p.add_argument("--kappa", type=float, default=1e-3)
    p.add_argument("--out", "--stats-out", dest="out", help="JSON report path")
    p.set_defaults(func=cmd_manifold)

    p = sub.add_parser("verify-scaling", help="fit deviation scaling exponents")
    p.add_argument("--scenario", required=True)
    p.add_argument("--paths", type=int, default=30)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigmas", type=_float_list, default=None, help="noise amplitudes to sweep")
    p.add_argument("--epsilons", type=_float_list, default=None, help="time-scale ratios to sweep")
    p.add_argument("--burn-in", type=float, default=None)
    p.add_argument("--tol", type=float, default=0.15, help="exponent acceptance half-width")
    p.add_argument("--out", "--stats-out", dest="out", help="stats JSON path")
    p.set_defaults(func=cmd_verify_scaling)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"slowfast: {exc}", file=sys.stderr)
        for item in exc.errors:
            print(f"  - {item}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"slowfast: numerical failure: {exc}", file=sys.stderr)
        return 2
    except SlowFastError as exc:
        print(f"slowfast: {exc}", file=sys.stderr)
        return 1


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
