"""End-to-end acceptance checks, one test per shipped claim.

Each test carries a ``criterion`` marker; conftest prints a PASS/FAIL line
per criterion after the run.  Tolerances are part of the claims and must
not be loosened here.
"""

import math
import time

import numpy as np
import pytest

from _oracles import gamma_quad, lyapunov_kron_solve
from _user_models import build_fold_ramp
from slowfast import (
    EnsembleConfig,
    FIXTURE_NAMES,
    LtcDevice,
    NumericalError,
    OuParams,
    RecoveryLoad,
    RngStream,
    SolverConfig,
    WeibullParams,
    WindSourceSpec,
    build_tube,
    emit_plot_data,
    estimate_autocorrelation,
    estimate_moments,
    find_consistent_init,
    fit_decay_rate,
    fixture_scenario,
    generate_wind_series,
    invariant_manifold_correction,
    ltc_step,
    manifold_distance_along,
    run_ensemble,
    run_scenario,
    scaling_study,
    simulate,
    solve_lyapunov,
    solve_slow_manifold,
)
from slowfast.fixtures import model_from_scenario


@pytest.mark.criterion(1, "wind marginal mean within 2% and variance within 5% of quadrature targets")
def test_wind_marginal_moments_match_quadrature_oracle(criterion_detail):
    k, lam = 1.51, 3.36
    spec = WindSourceSpec(
        ou=OuParams(alpha=1.0, beta=0.8), target=WeibullParams(k=k, lam=lam)
    )
    # dt of five mean-reversion times decorrelates successive samples
    series = generate_wind_series(spec, horizon=5.0 * 100_000, dt=5.0, rng=RngStream(7, 1))
    assert series.values.size >= 100_000
    mean, var = estimate_moments(series.values)
    mean_target = lam * gamma_quad(1 + 1 / k)
    var_target = lam**2 * gamma_quad(1 + 2 / k) - mean_target**2
    mean_err = abs(mean - mean_target) / mean_target
    var_err = abs(var - var_target) / var_target
    criterion_detail(f"mean err {mean_err:.3%}, var err {var_err:.3%}")
    assert mean_err <= 0.02
    assert var_err <= 0.05


@pytest.mark.criterion(2, "scaling the driving-noise amplitude leaves the speed marginal unchanged")
def test_noise_amplitude_invariance_of_marginal(criterion_detail):
    k, lam = 1.51, 3.36
    n = 20_000
    runs = {}
    for beta in (0.8, 8.0):
        spec = WindSourceSpec(
            ou=OuParams(alpha=1.0, beta=beta), target=WeibullParams(k=k, lam=lam)
        )
        series = generate_wind_series(spec, horizon=5.0 * n, dt=5.0, rng=RngStream(21, 1))
        runs[beta] = series.values
    m1, v1 = estimate_moments(runs[0.8])
    m2, v2 = estimate_moments(runs[8.0])
    count = runs[0.8].size
    se_mean = math.sqrt(v1 / count)
    se_var = float(np.std((runs[0.8] - m1) ** 2, ddof=1)) / math.sqrt(count)
    mean_shift = abs(m2 - m1) / se_mean
    var_shift = abs(v2 - v1) / se_var
    criterion_detail(f"mean shift {mean_shift:.2g} SE, var shift {var_shift:.2g} SE")
    assert mean_shift < 3.0
    assert var_shift < 3.0


@pytest.mark.criterion(3, "fitted autocorrelation decay rate within 10% of the generating rate")
def test_autocorrelation_decay_rate_recovered(criterion_detail):
    alpha = 0.01
    spec = WindSourceSpec(
        ou=OuParams(alpha=alpha, beta=1.0), target=WeibullParams(k=1.51, lam=3.36)
    )
    series = generate_wind_series(spec, horizon=1e4, dt=0.1, rng=RngStream(8, 1))
    assert series.values.size == 100_001
    # fit down to one mean-reversion time (correlation ~ 1/e)
    corr = estimate_autocorrelation(series.eta_values, max_lag=1000)
    fitted = fit_decay_rate(corr, 0.1)
    rel_err = abs(fitted - alpha) / alpha
    criterion_detail(f"fitted {fitted:.5f} vs {alpha}, rel err {rel_err:.3%}")
    assert rel_err <= 0.10


@pytest.mark.criterion(4, "tube exit fraction decays like exp(-h^2/(2 sigma^2)) on the pure-noise fixture")
def test_exit_fraction_decay_matches_gaussian_tail(criterion_detail):
    sc = fixture_scenario("ou-only")
    sigma = sc["sigma"]
    grid = (1.5 * sigma, 0.6, 0.7, 0.8, 0.9, 6.0 * sigma)
    cfg = EnsembleConfig(n_paths=200, master_seed=42, h_grid=grid)
    t0 = time.perf_counter()
    det, paths, stats = run_ensemble(sc, cfg)
    wall = time.perf_counter() - t0
    fractions = stats.exit_fractions
    assert fractions[1.5 * sigma] > 0.5
    assert fractions[6.0 * sigma] == 0.0
    inner = [(h, f) for h, f in fractions.items() if 0.0 < f < 1.0]
    assert len(inner) >= 2
    hs = np.array([h for h, _ in inner])
    fr = np.array([f for _, f in inner])
    slope = np.polyfit(hs**2, np.log(fr), 1)[0]
    target = -1.0 / (2.0 * sigma**2)
    criterion_detail(
        f"slope {slope:.2f} vs {target:.2f}, inner grid {hs.tolist()}, {wall:.0f}s"
    )
    assert 2.0 * target <= slope <= 0.5 * target
    assert wall <= 300.0


@pytest.mark.criterion(5, "median sup deviations scale with exponent 1.0 in sigma and 0.5 in epsilon")
def test_deviation_scaling_exponents(criterion_detail):
    sc = fixture_scenario("linear-slowfast")
    cfg = EnsembleConfig(n_paths=100, master_seed=0)
    t0 = time.perf_counter()
    res_sigma = scaling_study(sc, cfg, sigmas=(0.02, 0.0632, 0.2))
    res_eps = scaling_study(sc, cfg, epsilons=(0.01, 0.00316, 0.001))
    wall = time.perf_counter() - t0
    sigma_exp = res_sigma.fits["sigma_fast"][0]
    eps_exp = res_eps.fits["epsilon_slow"][0]
    criterion_detail(f"sigma_fast {sigma_exp:.3f}, epsilon_slow {eps_exp:.3f}, {wall:.0f}s")
    assert sigma_exp == pytest.approx(1.0, abs=0.15)
    assert eps_exp == pytest.approx(0.5, abs=0.15)
    assert wall <= 600.0


@pytest.mark.criterion(6, "zero noise amplitude reproduces the deterministic run bit for bit")
def test_zero_noise_is_bitwise_deterministic(criterion_detail):
    checked = []
    for name in FIXTURE_NAMES:
        sc = fixture_scenario(name)
        sc["sigma"] = 0.0
        det = run_scenario(sc)
        stoch = run_scenario(sc, mode="stochastic", stream_index=1)
        assert np.array_equal(det.tau, stoch.tau)
        assert np.array_equal(det.z_c, stoch.z_c)
        assert np.array_equal(det.x_bar, stoch.x_bar)
        assert np.array_equal(det.y_bar, stoch.y_bar)
        assert np.array_equal(det.z_d, stoch.z_d)
        checked.append(name)
    criterion_detail("bit-identical on " + ", ".join(checked))


@pytest.mark.criterion(7, "Lyapunov solver matches the Kronecker brute-force oracle on 20 random systems")
def test_lyapunov_solver_against_kronecker_oracle(criterion_detail):
    rng = np.random.default_rng(20250815)
    worst_diff = 0.0
    worst_res = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 7))
        raw = rng.normal(size=(n, n))
        shift = float(np.max(np.linalg.eigvals(raw).real)) + 0.5
        a = raw - shift * np.eye(n)
        m = rng.normal(size=(n, n))
        d = m @ m.T + 0.1 * np.eye(n)
        sol = solve_lyapunov(a, d)
        oracle = lyapunov_kron_solve(a, d)
        scale = max(1.0, float(np.abs(oracle).max()))
        worst_diff = max(worst_diff, float(np.abs(sol - oracle).max()) / scale)
        residual = np.abs(a @ sol + sol @ a.T + d).max() / np.abs(d).max()
        worst_res = max(worst_res, float(residual))
    criterion_detail(f"worst oracle gap {worst_diff:.2e}, worst residual {worst_res:.2e}")
    assert worst_diff <= 1e-10
    assert worst_res <= 1e-10


@pytest.mark.criterion(8, "first-order manifold correction scales linearly and leaves an O(eps^2) defect")
def test_invariant_manifold_correction_order(criterion_detail):
    z = 2.0
    eps_grid = (1e-2, 1e-3, 1e-4)

    def corrected(model, z_val):
        pt = solve_slow_manifold(model, np.array([z_val]), tol=1e-13)
        return pt, invariant_manifold_correction(model, pt)

    ratios = []
    defects = []
    for eps in eps_grid:
        sc = fixture_scenario("linear-slowfast")
        sc["epsilon"] = eps
        model = model_from_scenario(sc)
        pt, shifted = corrected(model, z)
        ratios.append(np.linalg.norm(shifted - pt.x_star) / eps)
        # invariance defect: fast drift minus eps * (dl/dz) * slow drift
        delta = 1e-4
        lp = corrected(model, z + delta)[1]
        lm = corrected(model, z - delta)[1]
        dl_dz = (lp - lm) / (2 * delta)
        z_arr = np.array([z])
        z_d = np.zeros(0)
        fast, _ = model.reduced_fast_rhs(z_arr, shifted, z_d, tol=1e-12)
        slow = model.reduced_slow_rhs(z_arr, shifted, z_d, tol=1e-12)
        defects.append(np.linalg.norm(fast - eps * dl_dz * slow[0]))
    ratios = np.asarray(ratios)
    spread = ratios.max() / ratios.min() - 1.0
    slope = np.polyfit(np.log(eps_grid), np.log(defects), 1)[0]
    criterion_detail(f"correction/eps spread {spread:.2e}, defect slope {slope:.3f}")
    assert spread <= 0.05
    assert slope == pytest.approx(2.0, abs=0.2)


@pytest.mark.criterion(9, "tap-changer branch logic is exact and recovery load equilibrium is consistent")
def test_device_logic_exact(criterion_detail):
    dev = LtcDevice(
        m=1.0, delta_m=0.01, m_min=0.9, m_max=1.1,
        v0=1.0, d=0.02, delay=20.0, next_event_time=50.0,
    )
    assert ltc_step(dev, v=1.03, now=50.0).m == 1.01
    assert ltc_step(dev, v=0.97, now=50.0).m == 0.99
    assert ltc_step(dev, v=1.01, now=50.0).m == 1.0
    assert ltc_step(dev, v=1.05, now=49.999) is dev
    assert ltc_step(dev, v=1.02, now=50.0).m == 1.0  # dead-band edge inactive
    high = LtcDevice(
        m=1.1, delta_m=0.01, m_min=0.9, m_max=1.1,
        v0=1.0, d=0.02, delay=20.0, next_event_time=50.0,
    )
    assert ltc_step(high, v=1.05, now=50.0).m == 1.1  # saturated
    assert ltc_step(dev, v=1.03, now=50.0).next_event_time == 70.0

    load = RecoveryLoad(
        T_p=20.0, T_q=15.0, p_s=1.0, q_s=0.3, p_t=0.9, q_t=0.25,
        exp_static=0.7, exp_transient=2.0,
    )
    worst = 0.0
    for v in (0.9, 1.0, 1.07):
        xp, xq = load.equilibrium_states(v)
        worst = max(
            worst,
            abs(load.real_power(xp, v) - load.p_static(v)),
            abs(load.reactive_power(xq, v) - load.q_static(v)),
        )
    criterion_detail(f"worst equilibrium power mismatch {worst:.2e}")
    assert worst <= 1e-10


@pytest.mark.criterion(10, "fold point reports a singular network and a ramp through it aborts cleanly")
def test_fold_detection_and_clean_abort(criterion_detail):
    sc = {"epsilon": 0.01, "sigma": 0.0, "horizon": 4.0, "params": {"rate": 0.5}}
    model = build_fold_ramp(sc)
    init = find_consistent_init(model, {"z_c": [1.0], "y_guess": [1.0]})
    fold = init.replace(z_c=np.array([0.0]), y_bar=np.array([0.0]))
    singular, det_value = model.is_singular(fold)
    assert singular is True
    assert abs(det_value) <= 1e-8
    regular, det_away = model.is_singular(init)
    assert regular is False
    assert abs(det_away) > 1e-3
    with pytest.raises(NumericalError) as err:
        simulate(model, init, 4.0, SolverConfig(dt=0.01, scheme="semi-implicit"))
    criterion_detail(
        f"|det| at fold {abs(det_value):.1e}; ramp aborts with {type(err.value).__name__}"
    )


@pytest.mark.criterion(11, "sample path stays inside the emitted tube and the reference tracks the manifold")
def test_tube_containment_and_manifold_tracking(criterion_detail, tmp_path):
    sc = fixture_scenario("bus-model")
    sigma = sc["sigma"]
    eps = sc["epsilon"]
    h = 10.0 * sigma
    det = run_scenario(sc)
    stoch = run_scenario(sc, mode="stochastic", stream_index=1)
    model = model_from_scenario(sc)
    tube = build_tube(model, det, h=h, stride=10)
    files = emit_plot_data(tmp_path, det, stoch=stoch, tube=tube)
    worst_margin = np.inf
    for path in files:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        sample, lower, upper = data[:, 2], data[:, 3], data[:, 4]
        worst_margin = min(
            worst_margin, float(np.min(sample - lower)), float(np.min(upper - sample))
        )
    assert worst_margin > 0.0  # inside the band at every sample of every variable

    # after the disturbance and the tap settle, the deterministic run must
    # ride the slow manifold of the patched system
    patched = model.with_params(sc["disturbances"][0]["set"])
    taus, dist = manifold_distance_along(patched, det, stride=10)
    tail = taus >= 30.0
    scale = max(1.0, float(np.abs(det.x_bar[det.tau >= 30.0]).max()))
    allowance = 2.0 * eps * scale
    tail_dist = float(dist[tail].max())
    criterion_detail(
        f"worst band margin {worst_margin:.4f}, tail manifold dist {tail_dist:.2e} <= {allowance:.2e}"
    )
    assert tail_dist <= allowance


@pytest.mark.criterion(12, "deterministic run costs <= 1.1x one path; 100-path ensemble costs >= 50x")
def test_relative_costs_motivate_tube_analysis(criterion_detail, monkeypatch):
    monkeypatch.delenv("SLOWFAST_THREADS", raising=False)
    sc = fixture_scenario("linear-slowfast")
    run_scenario(sc)
    run_scenario(sc, mode="stochastic", stream_index=1)

    def best_of(fn, n=5):
        times = []
        for _ in range(n):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    det_t = best_of(lambda: run_scenario(sc))
    path_t = best_of(lambda: run_scenario(sc, mode="stochastic", stream_index=1))
    ratio = det_t / path_t
    _, _, stats = run_ensemble(sc, EnsembleConfig(n_paths=100, master_seed=3))
    speedup = stats.timings["ensemble_s"] / det_t
    criterion_detail(f"det/path {ratio:.2f} (<=1.1), ensemble/det {speedup:.0f}x (>=50)")
    assert ratio <= 1.1
    assert speedup >= 50.0
