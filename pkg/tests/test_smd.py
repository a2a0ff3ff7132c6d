import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from impactid import smd
from impactid.errors import InvalidConfig, NonPositiveInput, UpsamplingRequested
from impactid.signal import TimeSeries

M = 0.5
DT = 1.0 / 300.0


def params(k=1e5, c=10.0, h=0.2, m=M):
    return smd.SmdParams(m, k, c, h)


def test_impulse_force_hand_value():
    assert smd.impulse_force(0.5, 0.2, 9.81, 0.015) == pytest.approx(66.03, abs=0.005)


def test_impulse_force_small_height_limit():
    assert smd.impulse_force(0.5, 1e-12) < 1e-3
    assert smd.impulse_force(0.5, 1e-12) < smd.impulse_force(0.5, 1e-10)


def test_doubling_height_scales_force_by_sqrt2():
    ratio = smd.impulse_force(0.5, 0.4) / smd.impulse_force(0.5, 0.2)
    assert ratio == pytest.approx(math.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("field, kwargs", [
    ("M", dict(m=0.0)), ("k", dict(k=-1.0)), ("c", dict(c=-0.1)), ("h", dict(h=0.0))])
def test_invalid_params_name_field(field, kwargs):
    with pytest.raises(NonPositiveInput) as err:
        params(**kwargs)
    assert err.value.field == field


def test_solver_config_checks():
    with pytest.raises(InvalidConfig):
        smd.SolverConfig(step=0.01).validate(0.015)
    with pytest.raises(InvalidConfig):
        smd.SolverConfig(duration=0.01).validate(0.015)


def test_rest_at_contact():
    assert smd.analytic_response(params(), 0.0) == (0.0, 0.0, 0.0)


def test_overdamped_does_not_oscillate():
    p = smd.SmdParams(1.0, 100.0, 100.0, 0.2)
    assert p.zeta == pytest.approx(5.0)
    t = np.linspace(p.dt_force, 5.0, 4000)
    x, _, fr = smd.analytic_response(p, t)
    assert np.all(x > 0)
    # k x + c x' crosses zero once as the slow mode takes over, never again
    assert np.count_nonzero(np.diff(np.sign(fr))) <= 1
    rk = smd.simulate_response(p).values
    assert np.count_nonzero(np.diff(np.sign(rk[rk != 0]))) <= 1


def test_undamped_keeps_amplitude():
    p = params(c=0.0)
    t = np.linspace(0.02, 0.5, 20001)
    x, _, _ = smd.analytic_response(p, t)
    first, last = x[t < 0.1], x[t > 0.4]
    assert np.ptp(last) == pytest.approx(np.ptp(first), rel=1e-4)


def test_undamped_forcing_bound():
    p = params(c=0.0)
    t = np.linspace(0, p.dt_force, 1001)
    x, _, _ = smd.analytic_response(p, t)
    target = p.force / p.k
    assert np.all(np.abs(x - target) <= abs(0 - target) * (1 + 1e-12))


def test_rk4_matches_closed_form_reference_case():
    p = params()
    rk = smd.simulate_response(p).values
    t = np.arange(len(rk)) * (1 / 30000)
    _, _, exact = smd.analytic_response(p, t)
    assert np.max(np.abs(rk - exact)) / np.max(np.abs(exact)) < 1e-6


@pytest.mark.parametrize("k, c", [(1e5, 10.0), (2e4, 200.0), (5e3, 1000.0)])
def test_forcing_phase_formula_against_fine_integration(k, c):
    p = params(k=k, c=c)
    wn = math.sqrt(k / M)
    z = p.zeta
    t1 = 0.0123
    F = p.force
    if z < 1:
        wd = wn * math.sqrt(1 - z * z)
        formula = F / k * (1 - math.exp(-z * wn * t1) * (math.cos(wd * t1) + z * wn / wd * math.sin(wd * t1)))
    else:
        formula = smd.analytic_response(p, t1)[0]
    sol = solve_ivp(lambda t, y: [y[1], (F - k * y[0] - c * y[1]) / M], (0, t1), [0.0, 0.0],
                    method="DOP853", rtol=1e-13, atol=1e-16, max_step=1e-5)
    numeric = sol.y[0, -1]
    assert abs(smd.analytic_response(p, t1)[0] - formula) <= 1e-12 * abs(formula)
    assert abs(numeric - formula) < 1e-9 * abs(formula)


def test_rk4_fine_step_forcing_point():
    # independent fixed-step integration with a very small step
    p = params()
    F, k, c = p.force, p.k, p.c
    h = 1e-8
    n = 123000
    x = v = 0.0
    for _ in range(n):
        x, v = smd._rk4_step(x, v, h, M, k, c, F)
    exact = smd.analytic_response(p, n * h)[0]
    assert abs(x - exact) < 1e-9 * abs(exact)


def test_energy_conserved_without_damping():
    p = params(c=0.0)
    t, x, v = smd.integrate_states(p)
    after = t > p.dt_force + 1e-12
    e = 0.5 * M * v[after] ** 2 + 0.5 * p.k * x[after] ** 2
    assert np.ptp(e) / e[0] < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(3, 7), st.floats(0, 0.95), st.floats(1.01, 3.0))
def test_more_damping_decays_faster(log_k, zeta, factor):
    # free-decay envelope relative to the state at the end of the pulse
    k = 10 ** log_k
    t = np.linspace(0.015, 0.5, 400)

    def envelope(c):
        x, v, _ = smd.analytic_response(params(k=k, c=c), t)
        s = c / (2 * M)
        wd = math.sqrt(k / M - s * s)
        env = np.sqrt(x ** 2 + ((v + s * x) / wd) ** 2)
        return env / env[0]

    c1 = zeta * 2 * math.sqrt(M * k)
    c2 = min(c1 * factor, 0.999 * 2 * math.sqrt(M * k))
    if c2 <= c1:
        return
    assert np.all(envelope(c2) <= envelope(c1) * (1 + 1e-9))


@settings(max_examples=40, deadline=None)
@given(st.floats(3, 7), st.floats(0, 4), st.floats(0.2, 4.0))
def test_linearity_in_sqrt_height(log_k, log_c, s):
    p1 = smd.SmdParams(M, 10 ** log_k, 10 ** log_c, 0.05)
    p2 = smd.SmdParams(M, 10 ** log_k, 10 ** log_c, 0.05 * s * s)
    t = np.linspace(0, 0.5, 301)
    f1 = smd.analytic_response(p1, t)[2]
    f2 = smd.analytic_response(p2, t)[2]
    np.testing.assert_allclose(f2, s * f1, rtol=1e-9, atol=1e-12 * np.max(np.abs(f1)))


def test_peak_ratio_200_vs_50_mm():
    a = smd.sampled_response(params(h=0.2), 150, DT).max()
    b = smd.sampled_response(params(h=0.05), 150, DT).max()
    assert a / b == pytest.approx(2.0, rel=1e-12)


def test_critical_damping_is_continuous():
    k = 1e4
    c_crit = 2 * math.sqrt(M * k)
    t = np.linspace(0, 0.3, 500)
    mid = smd.analytic_response(params(k=k, c=c_crit), t)[2]
    for c in (c_crit * (1 - 1e-7), c_crit * (1 + 1e-7)):
        np.testing.assert_allclose(smd.analytic_response(params(k=k, c=c), t)[2], mid,
                                   rtol=1e-5, atol=1e-9 * np.max(np.abs(mid)))


def test_sampled_response_equals_analytic():
    p = params(k=3e4, c=25.0)
    t = np.arange(90) * DT
    np.testing.assert_allclose(smd.sampled_response(p, 90, DT), smd.analytic_response(p, t)[2],
                               rtol=1e-13, atol=1e-12)


# --- resampling -------------------------------------------------------------

def test_resample_identity():
    s = TimeSeries(np.sin(np.arange(100)), dt=0.01)
    np.testing.assert_array_equal(smd.resample(s, 0.01).values, s.values)


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([0.002, 0.003, 0.0075, 0.01]))
def test_resample_keeps_lines_exact(a, b, dt):
    t = np.arange(1001) * 0.001
    out = smd.resample(TimeSeries(a * t + b, dt=0.001), dt)
    np.testing.assert_allclose(out.values, a * out.times + b, rtol=0, atol=1e-12)


def test_resample_sine_within_interpolation_bound():
    step = 1 / 30000
    f = 5.0
    t = np.arange(15001) * step
    out = smd.resample(TimeSeries(np.sin(2 * np.pi * f * t), dt=step), DT)
    bound = (2 * np.pi * f) ** 2 * step ** 2 / 8
    err = np.abs(out.values - np.sin(2 * np.pi * f * out.times))
    assert err.max() <= bound + 1e-15


def test_resample_refuses_upsampling():
    with pytest.raises(UpsamplingRequested):
        smd.resample(TimeSeries(np.zeros(10), dt=0.01), 0.001)
