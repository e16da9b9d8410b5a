"""Device components and the slow-fast DAE container."""

import math
from dataclasses import FrozenInstanceError
from fractions import Fraction

import numpy as np
import pytest

from slowfast import (
    ConvergenceError,
    LtcDevice,
    ModelDims,
    NumericalError,
    OuParams,
    ParameterError,
    RecoveryLoad,
    SlowFastState,
    SystemModel,
    WeibullParams,
    WindInjection,
    WindSourceSpec,
    bus_model,
    linear_slowfast_model,
    ltc_step,
    ou_only_model,
    wind_power_injection,
)

from _oracles import bracketed_root


def state_for(model, z_c=(), x_bar=(), y_bar=(), z_d=(), tau=0.0):
    return SlowFastState(
        z_c=np.array(z_c, dtype=float),
        x_bar=np.array(x_bar, dtype=float),
        y_bar=np.array(y_bar, dtype=float),
        z_d=np.array(z_d, dtype=float),
        tau=tau,
    )


def quadratic_model():
    """One slow state, algebraic constraint y^2 = z; fold at z = 0."""

    def slow(z_c, x_bar, y_bar, z_d, prm):
        return np.array([0.0])

    def alg(z_c, x_bar, y_bar, z_d, prm):
        return np.array([y_bar[0] ** 2 - z_c[0]])

    return SystemModel(
        dims=ModelDims(n_zc=1, n_x=0, n_y=1, n_zd=0, n_w=0, epsilon=0.01),
        slow_rhs=slow,
        algebraic=alg,
    )


# ------------------------------------------------------------ recovery load


def test_recovery_load_equilibrium_consumes_static_power():
    load = RecoveryLoad(
        T_p=20.0, T_q=15.0, p_s=1.0, q_s=0.3, p_t=0.9, q_t=0.25,
        exp_static=0.7, exp_transient=2.0,
    )
    for v in (0.9, 1.0, 1.07):
        xp, xq = load.equilibrium_states(v)
        assert load.real_power(xp, v) == pytest.approx(load.p_static(v), abs=1e-10)
        assert load.reactive_power(xq, v) == pytest.approx(load.q_static(v), abs=1e-10)
        assert load.xp_rate(xp, v) == pytest.approx(0.0, abs=1e-14)
        assert load.xq_rate(xq, v) == pytest.approx(0.0, abs=1e-14)
        assert load.power_residual(load.real_power(xp, v), xp, v) == 0.0


def test_recovery_rate_hand_value():
    # -x_p/T_p + p_s - p_t with easy numbers: -1/2 + 2 - 1 = 0.5
    load = RecoveryLoad(T_p=2.0, T_q=2.0, p_s=2.0, q_s=0.0, p_t=1.0, q_t=0.0)
    assert load.xp_rate(1.0, 1.0) == 0.5


def test_recovery_exponent_characteristics():
    load = RecoveryLoad(
        T_p=5.0, T_q=5.0, p_s=1.4, q_s=0.4, p_t=1.1, q_t=0.3,
        exp_static=1.2, exp_transient=2.0,
    )
    v = 0.95
    assert load.p_static(v) == 1.4 * v**1.2
    assert load.q_transient(v) == 0.3 * v**2.0
    # voltage drop cuts transient consumption quadratically
    assert load.real_power(0.0, 0.9) == 1.1 * 0.81


def test_recovery_load_validation():
    with pytest.raises(ParameterError):
        RecoveryLoad(T_p=0.0, T_q=1.0, p_s=1.0, q_s=0.3, p_t=1.0, q_t=0.3)
    with pytest.raises(ParameterError):
        RecoveryLoad(T_p=1.0, T_q=-2.0, p_s=1.0, q_s=0.3, p_t=1.0, q_t=0.3)


# ------------------------------------------------------------------- LTC


def make_ltc(**kw):
    base = dict(
        m=1.0, delta_m=0.01, m_min=0.9, m_max=1.1,
        v0=1.0, d=0.02, delay=20.0, next_event_time=50.0,
    )
    base.update(kw)
    return LtcDevice(**base)


def test_ltc_raises_lowers_and_holds_exactly():
    dev = make_ltc()
    up = ltc_step(dev, v=1.03, now=50.0)
    assert up.m == 1.01
    assert up.next_event_time == 70.0

    down = ltc_step(dev, v=0.97, now=50.0)
    assert down.m == 0.99
    assert down.next_event_time == 70.0

    hold = ltc_step(dev, v=1.01, now=50.0)
    assert hold.m == 1.0
    assert hold.next_event_time == 70.0  # timer advances even without a move


def test_ltc_quiet_before_timer():
    dev = make_ltc()
    out = ltc_step(dev, v=1.05, now=49.999)
    assert out is dev


def test_ltc_dead_band_boundary_is_inactive():
    # strictly-above/below comparisons: the band edges do not trigger
    dev = make_ltc()
    assert ltc_step(dev, v=1.02, now=50.0).m == 1.0
    assert ltc_step(dev, v=0.98, now=50.0).m == 1.0


def test_ltc_saturates_at_limits():
    dev = make_ltc(m=1.1)
    out = ltc_step(dev, v=1.05, now=50.0)
    assert out.m == 1.1
    assert out.next_event_time == 70.0
    dev = make_ltc(m=0.9)
    out = ltc_step(dev, v=0.9, now=50.0)
    assert out.m == 0.9


def test_ltc_partial_step_clamps_to_limit():
    dev = make_ltc(m=1.095)
    out = ltc_step(dev, v=1.05, now=50.0)
    assert out.m == 1.1


def test_ltc_monotone_saturation_event_count():
    # dyadic step so float accumulation is exact; event count must equal
    # ceil((m_max - m0) / delta_m) computed in rational arithmetic
    m0, dm, m_max = 1.0, 0.015625, 1.1
    dev = LtcDevice(
        m=m0, delta_m=dm, m_min=0.5, m_max=m_max,
        v0=1.0, d=0.02, delay=10.0, next_event_time=0.0,
    )
    moves = 0
    now = 0.0
    for _ in range(50):
        new = ltc_step(dev, v=1.5, now=now)
        if new.m != dev.m:
            moves += 1
        dev = new
        now = dev.next_event_time
    expected = math.ceil((Fraction(m_max) - Fraction(m0)) / Fraction(dm))
    assert moves == expected == 7
    assert dev.m == m_max


def test_ltc_validation():
    with pytest.raises(ParameterError):
        make_ltc(delta_m=0.0)
    with pytest.raises(ParameterError):
        make_ltc(m=1.2)
    with pytest.raises(ParameterError):
        make_ltc(d=-0.1)
    with pytest.raises(ParameterError):
        make_ltc(delay=0.0)


# ------------------------------------------------------------- power curve


def test_power_curve_exact_values():
    inj = WindInjection(cut_in=3.0, rated_speed=12.0, cut_out=35.0, rated_power=2.0)
    assert wind_power_injection(0.0, inj) == 0.0
    assert wind_power_injection(2.9, inj) == 0.0
    assert wind_power_injection(3.0, inj) == 0.0  # continuous at cut-in
    # rational oracle for the cubic segment
    exact = Fraction(2) * (Fraction(15, 2) ** 3 - 27) / (Fraction(12) ** 3 - 27)
    assert exact == Fraction(13, 28)
    assert wind_power_injection(7.5, inj) == float(exact)
    assert wind_power_injection(12.0, inj) == 2.0  # rated exactly
    assert wind_power_injection(34.999, inj) == 2.0  # flat up to cut-out
    assert wind_power_injection(35.0, inj) == 0.0  # shutdown discontinuity
    assert wind_power_injection(80.0, inj) == 0.0


def test_power_curve_monotone_on_cubic_segment():
    inj = WindInjection(cut_in=4.0, rated_speed=25.0, cut_out=35.0, rated_power=50.0)
    speeds = np.linspace(4.0, 25.0, 60)
    powers = wind_power_injection(speeds, inj)
    assert np.all(np.diff(powers) > 0.0)
    assert powers[0] == 0.0
    assert powers[-1] == 50.0


def test_power_curve_array_matches_scalar_map():
    inj = WindInjection(cut_in=3.0, rated_speed=12.0, cut_out=25.0, rated_power=2.0)
    speeds = np.array([0.0, 3.0, 7.5, 12.0, 20.0, 25.0, 30.0])
    arr = wind_power_injection(speeds, inj)
    assert arr.shape == speeds.shape
    assert np.array_equal(arr, [wind_power_injection(s, inj) for s in speeds])


def test_power_curve_validation():
    with pytest.raises(ParameterError):
        WindInjection(cut_in=-1.0, rated_speed=12.0, cut_out=25.0, rated_power=2.0)
    with pytest.raises(ParameterError):
        WindInjection(cut_in=12.0, rated_speed=12.0, cut_out=25.0, rated_power=2.0)
    with pytest.raises(ParameterError):
        WindInjection(cut_in=3.0, rated_speed=12.0, cut_out=12.0, rated_power=2.0)
    with pytest.raises(ParameterError):
        WindInjection(cut_in=3.0, rated_speed=12.0, cut_out=25.0, rated_power=-2.0)


# ------------------------------------------------------------ dims / state


def test_dims_validation_and_totals():
    dims = ModelDims(n_zc=2, n_x=1, n_y=1, n_zd=2, n_w=1, epsilon=0.01)
    assert dims.n_xbar == 2
    assert dims.n_ybar == 2
    with pytest.raises(ParameterError):
        ModelDims(n_zc=1, n_x=1, n_y=1, n_zd=0, n_w=1, epsilon=0.0)


def test_state_is_immutable_and_replace_works():
    st = state_for(linear_slowfast_model(), [1.0], [1.0, 0.0], [1.0, 3.0])
    with pytest.raises(FrozenInstanceError):
        st.tau = 2.0
    st2 = st.replace(tau=2.0)
    assert st2.tau == 2.0 and st.tau == 0.0
    assert np.array_equal(st2.z_c, st.z_c)


# ----------------------------------------------------------- linear fixture


def test_linear_fixture_rhs_values():
    model = linear_slowfast_model(epsilon=0.01, sigma=0.1)
    st = state_for(model, [2.0], [1.5, 0.3], [1.5, 3.0])
    assert np.array_equal(model.eval_slow_rhs(st), [-1.7])
    assert np.array_equal(model.eval_fast_rhs(st), [0.5, -0.3])


def test_linear_fixture_algebraic_residual_zeroes():
    model = linear_slowfast_model(epsilon=0.01, sigma=0.1)
    speed = model.wind_speeds(np.array([0.3]))[0]
    st = state_for(model, [2.0], [1.5, 0.3], [1.5, speed])
    assert np.array_equal(model.eval_algebraic(st), [0.0, 0.0])


def test_wind_speed_map_amplitude_and_degenerate_limit():
    model = linear_slowfast_model(epsilon=0.01, sigma=0.1)
    src = model.wind[0]
    # the coupling normalizes by the model noise amplitude sigma/sqrt(2 alpha)
    from slowfast.wind import transform_gaussian

    amp = 0.1 / math.sqrt(2.0 * src.ou.alpha)
    assert model.wind_speeds(np.array([0.3]))[0] == transform_gaussian(0.3, amp, src.target)
    frozen = linear_slowfast_model(epsilon=0.01, sigma=0.0)
    assert frozen.wind_speeds(np.array([123.0]))[0] == src.target.median()


def test_bus_wind_row_uses_slow_decay_rate():
    model = bus_model()
    st = state_for(model, [1.0, 1.0], [1.05, 1.0], [1.0, 19.0], [1.0, 25.0])
    rhs = model.eval_fast_rhs(st)
    assert rhs[-1] == -(0.2575 / 3600.0)
    assert rhs[-1] == pytest.approx(-7.153e-5, rel=1e-3)


def test_bus_fast_rhs_is_emf_feedback():
    model = bus_model()
    st = state_for(model, [1.0, 1.0], [1.05, 0.0], [0.98, 19.0], [1.0, 25.0])
    # e_set - e + k_v (v_ref - v) = 1.05 - 1.05 + 0.5 * 0.02
    assert model.eval_fast_rhs(st)[0] == pytest.approx(0.01, abs=1e-15)


# ------------------------------------------------------------ model guards


def test_model_validation():
    dims = ModelDims(n_zc=1, n_x=0, n_y=0, n_zd=0, n_w=0, epsilon=0.01)
    with pytest.raises(ParameterError):
        SystemModel(dims=dims)  # n_zc > 0 needs a slow_rhs
    with pytest.raises(ParameterError):
        SystemModel(
            dims=ModelDims(n_zc=0, n_x=0, n_y=0, n_zd=0, n_w=1, epsilon=0.01),
            wind=(),
        )
    with pytest.raises(ParameterError):
        ou_only_model(sigma=-0.5)


def test_rhs_output_length_is_checked():
    def bad_slow(z_c, x_bar, y_bar, z_d, prm):
        return np.array([1.0, 2.0])

    model = SystemModel(
        dims=ModelDims(n_zc=1, n_x=0, n_y=0, n_zd=0, n_w=0, epsilon=0.01),
        slow_rhs=bad_slow,
    )
    with pytest.raises(ParameterError):
        model.eval_slow_rhs(state_for(model, [1.0]))


def test_with_params_returns_patched_copy():
    model = linear_slowfast_model()
    patched = model.with_params({"a_slow": 3.0})
    assert patched.params["a_slow"] == 3.0
    assert model.params["a_slow"] == 1.0
    with pytest.raises(TypeError):
        model.params["a_slow"] = 9.0


def test_disturbances_sorted_by_time():
    model = linear_slowfast_model(
        disturbances=((5.0, {"a_slow": 2.0}), (1.0, {"a_slow": 3.0}))
    )
    assert [t for t, _ in model.disturbances] == [1.0, 5.0]


# ------------------------------------------------------- algebraic solving


def test_solve_algebraic_linear_system_exactly():
    def alg(z_c, x_bar, y_bar, z_d, prm):
        return np.array([2.0 * y_bar[0] - 2.0, 4.0 * y_bar[1] - 8.0])

    model = SystemModel(
        dims=ModelDims(n_zc=0, n_x=0, n_y=2, n_zd=0, n_w=0, epsilon=0.01),
        algebraic=alg,
    )
    st = state_for(model, y_bar=[0.0, 0.0])
    y = model.solve_algebraic(st, tol=1e-12)
    assert y == pytest.approx([1.0, 2.0], abs=1e-12)


def test_solve_algebraic_quadratic_against_bracketing_oracle():
    model = quadratic_model()
    st = state_for(model, [4.0], y_bar=[0.0])
    root = bracketed_root(lambda y: y * y - 4.0, 0.0, 10.0)
    got = model.solve_algebraic(st, guess=np.array([1.0]), tol=1e-12)
    assert got[0] == pytest.approx(root, rel=1e-10)
    # Newton follows the branch of the starting guess
    other = model.solve_algebraic(st, guess=np.array([-1.0]), tol=1e-12)
    assert other[0] == pytest.approx(-root, rel=1e-10)


def test_solve_algebraic_failure_modes():
    model = quadratic_model()
    no_root = state_for(model, [-1.0], y_bar=[1.0])
    with pytest.raises(NumericalError):
        model.solve_algebraic(no_root)
    far = state_for(model, [4.0], y_bar=[100.0])
    with pytest.raises(ConvergenceError) as err:
        model.solve_algebraic(far, tol=1e-12, max_iter=2)
    assert err.value.best_residual > 0.0
    with pytest.raises(ParameterError):
        model.solve_algebraic(state_for(model, [4.0], y_bar=[1.0]), guess=np.zeros(3))


def test_wind_rows_are_preset_exactly():
    model = ou_only_model(sigma=0.2)
    st = state_for(model, x_bar=[0.4], y_bar=[0.0])
    y = model.solve_algebraic(st)
    assert y[0] == model.wind_speeds(np.array([0.4]))[0]


# ------------------------------------------------------------- singularity


def test_fold_point_is_flagged_singular():
    model = quadratic_model()
    fold = state_for(model, [0.0], y_bar=[0.0])
    flag, det = model.is_singular(fold)
    assert flag is True
    assert det == 0.0


def test_regular_point_is_not_singular():
    model = quadratic_model()
    st = state_for(model, [4.0], y_bar=[2.0])
    flag, det = model.is_singular(st)
    assert flag is False
    assert det == pytest.approx(4.0, rel=1e-9)


def test_wind_only_algebra_is_always_regular():
    model = ou_only_model(sigma=0.2)
    st = state_for(model, x_bar=[0.0], y_bar=[model.wind[0].target.median()])
    flag, det = model.is_singular(st)
    assert flag is False
    assert det == pytest.approx(1.0, rel=1e-9)


def test_no_algebra_never_singular():
    model = SystemModel(
        dims=ModelDims(n_zc=1, n_x=0, n_y=0, n_zd=0, n_w=0, epsilon=0.01),
        slow_rhs=lambda z, x, y, d, p: np.array([0.0]),
    )
    assert model.is_singular(state_for(model, [1.0])) == (False, 1.0)


# --------------------------------------------------------------- jacobians


def test_fd_jacobian_matches_analytic_on_bus_network_row():
    model = bus_model()
    p = model.params
    v, w = 1.0, 10.0
    st = state_for(model, [1.0, 1.2], [1.05, 0.5], [v, w], [1.0, 25.0])
    jac = model.algebraic_jacobian(st)
    inj = dict(cut_in=4.0, rated_speed=25.0, cut_out=35.0, rated_power=50.0)
    dinj = inj["rated_power"] * 3.0 * w**2 / (inj["rated_speed"] ** 3 - inj["cut_in"] ** 3)
    expected = np.array(
        [
            [-1.0 - 2.0 * v * (p["r_p"] * 1.0 + p["r_q"] * 0.3),
             p["r_p"] * dinj / p["s_base"]],
            [0.0, 1.0],
        ]
    )
    assert jac == pytest.approx(expected, rel=1e-6, abs=1e-9)


def test_fd_jacobian_exact_on_linear_rows():
    model = linear_slowfast_model()
    speed = model.wind_speeds(np.array([0.0]))[0]
    st = state_for(model, [1.0], [1.0, 0.0], [1.0, speed])
    assert model.algebraic_jacobian(st) == pytest.approx(np.eye(2), abs=1e-10)


def test_reduced_fast_jacobian_of_linear_fixture():
    model = linear_slowfast_model()
    jac = model.reduced_fast_jacobian(
        np.array([1.0]), np.array([1.0, 0.0]), np.zeros(0)
    )
    assert jac == pytest.approx(np.diag([-1.0, -1.0]), abs=1e-8)


def test_reduced_fast_rhs_closes_algebra():
    model = linear_slowfast_model(sigma=0.1)
    rhs, y = model.reduced_fast_rhs(np.array([2.0]), np.array([1.5, 0.3]), np.zeros(0))
    assert y[0] == pytest.approx(1.5, abs=1e-10)  # y mirrors x
    assert y[1] == model.wind_speeds(np.array([0.3]))[0]
    assert rhs == pytest.approx([0.5, -0.3], abs=1e-12)


# ----------------------------------------------------------- discrete layer


def bus_state(v, z_d):
    model = bus_model()
    return model, state_for(model, [1.0, 1.2], [1.05, 0.0], [v, 19.0], z_d)


def test_apply_discrete_fires_due_tap():
    model, st = bus_state(v=0.95, z_d=[1.0, 25.0])
    new, events = model.apply_discrete_logged(st, now=25.0)
    assert np.array_equal(new.z_d, [0.9875, 45.0])
    assert events == [(25.0, "ltc", 1.0, 0.9875)]
    # continuous variables bitwise untouched
    assert np.array_equal(new.z_c, st.z_c)
    assert np.array_equal(new.x_bar, st.x_bar)
    assert np.array_equal(new.y_bar, st.y_bar)


def test_apply_discrete_idle_before_timer():
    model, st = bus_state(v=0.95, z_d=[1.0, 25.0])
    new = model.apply_discrete(st, now=10.0)
    assert new is st


def test_apply_discrete_timer_advances_without_move():
    model, st = bus_state(v=0.98, z_d=[1.0, 25.0])  # inside dead band
    new, events = model.apply_discrete_logged(st, now=25.0)
    assert np.array_equal(new.z_d, [1.0, 45.0])
    assert events == []


def test_apply_discrete_noop_without_devices():
    model = linear_slowfast_model()
    st = state_for(model, [1.0], [1.0, 0.0], [1.0, 3.0])
    assert model.apply_discrete(st, now=100.0) is st
