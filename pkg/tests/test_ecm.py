import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cmrls import ecm
from cmrls.config import DEFAULT_ECM

PARAMS = DEFAULT_ECM


def scalar_expm(a: float, t: float, terms: int = 40) -> float:
    """Series oracle for exp(a t), independent of math.exp."""
    acc = 1.0
    term = 1.0
    for k in range(1, terms):
        term *= a * t / k
        acc += term
    return acc


def simpson(f, lo: float, hi: float, n: int = 2000) -> float:
    """Composite Simpson quadrature oracle."""
    xs = np.linspace(lo, hi, 2 * n + 1)
    ys = np.array([f(x) for x in xs])
    h = (hi - lo) / (2 * n)
    return h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-2:2].sum())


def test_validate_rejects_nonpositive():
    with pytest.raises(ecm.InvalidParamsError):
        ecm.EcmParams(r0=0.0, r1=1.0, c1=1.0, cap=1.0, beta1=1.0, beta2=0.0).validate()
    with pytest.raises(ecm.InvalidParamsError):
        ecm.EcmParams(r0=1.0, r1=1.0, c1=1.0, cap=1.0, beta1=-0.1, beta2=0.0).validate()


def test_discretize_dt_zero_is_identity():
    m = ecm.discretize(PARAMS, 0.0)
    assert np.array_equal(m.a_d, np.eye(2))
    assert np.array_equal(m.b_d, np.zeros(2))


def test_discretize_closed_forms():
    dt = 10.0
    m = ecm.discretize(PARAMS, dt)
    tau = PARAMS.r1 * PARAMS.c1
    assert tau == pytest.approx(9.359e3, rel=2e-4)
    assert m.a_d[0, 0] == pytest.approx(math.exp(-dt / tau), abs=0)
    assert m.a_d[0, 1] == 0.0 and m.a_d[1, 0] == 0.0 and m.a_d[1, 1] == 1.0
    assert m.b_d[1] == dt / PARAMS.cap  # exact
    assert np.array_equal(m.c_d, [1.0, PARAMS.beta1])
    assert m.d_d == PARAMS.r0


def test_discretize_against_series_expm():
    dt = 10.0
    m = ecm.discretize(PARAMS, dt)
    oracle = scalar_expm(-1.0 / (PARAMS.r1 * PARAMS.c1), dt)
    assert m.a_d[0, 0] == pytest.approx(oracle, rel=1e-14)


def test_discretize_bd_against_quadrature():
    rng = np.random.default_rng(21)
    for _ in range(10):
        params = ecm.EcmParams(
            r0=rng.uniform(1e-3, 1e-1), r1=rng.uniform(1e-2, 1.0),
            c1=rng.uniform(1e2, 1e5), cap=rng.uniform(1e3, 1e5),
            beta1=rng.uniform(0.1, 2.0), beta2=rng.uniform(2.0, 4.0))
        dt = rng.uniform(0.1, 50.0)
        m = ecm.discretize(params, dt)
        tau = params.r1 * params.c1
        # b_d = integral_0^dt expm(A s) ds @ B, elementwise
        b0 = simpson(lambda s: scalar_expm(-1 / tau, s) / params.c1, 0.0, dt)
        b1 = simpson(lambda s: 1.0 / params.cap, 0.0, dt)
        assert m.b_d[0] == pytest.approx(b0, rel=1e-9)
        assert m.b_d[1] == pytest.approx(b1, rel=1e-9)


def test_step_zero_input_at_rest():
    m = ecm.discretize(PARAMS, 10.0)
    state = ecm.EcmState(v1=0.0, soc=0.4)
    nxt, v = ecm.step(m, state, 0.0)
    assert nxt.v1 == 0.0
    assert nxt.soc == 0.4
    assert v == PARAMS.beta1 * 0.4 + PARAMS.beta2


def test_step_single_step_rc_response():
    dt = 10.0
    m = ecm.discretize(PARAMS, dt)
    cur = 2.5
    nxt, _ = ecm.step(m, ecm.EcmState(v1=0.0, soc=0.5), cur)
    expected = PARAMS.r1 * (1 - math.exp(-dt / (PARAMS.r1 * PARAMS.c1))) * cur
    assert nxt.v1 == pytest.approx(expected, rel=1e-14)


def test_step_soc_integrator():
    dt = 10.0
    m = ecm.discretize(PARAMS, dt)
    state = ecm.EcmState(v1=0.0, soc=0.5)
    cur = 1.5
    for _ in range(20):
        state, _ = ecm.step(m, state, cur)
    assert state.soc == pytest.approx(0.5 + 20 * dt * cur / PARAMS.cap, rel=1e-12)


def test_simulate_zero_profile_constant_voltage():
    profile = ecm.CurrentProfile(dt=1.0, segments=((0.0, 100),))
    trace = ecm.simulate(PARAMS, profile, ecm.EcmState(v1=0.0, soc=0.7))
    expected = PARAMS.beta1 * 0.7 + PARAMS.beta2
    assert np.all(trace.voltage == expected)
    assert len(trace) == 101


def test_simulate_charge_balance():
    profile = ecm.gen_random_pulse(
        ecm.PulseConfig(amp_min=0.5, amp_max=3.0, hold_min=5, hold_max=30,
                        rest_min=0, rest_max=10, sign_mode="random", duration=600),
        seed=5, dt=0.5)
    trace = ecm.simulate(PARAMS, profile, ecm.EcmState(v1=0.0, soc=0.5))
    # final sample's current is not integrated (it is the endpoint value)
    integral = trace.current[:-1].sum() * profile.dt
    delta = trace.soc[-1] - trace.soc[0]
    assert delta == pytest.approx(integral / PARAMS.cap, rel=1e-12, abs=1e-15)


def test_simulate_relaxation_time_constant():
    # pulse then a long rest: fit exp decay on the tail, recover tau to 1%
    dt = 10.0
    tau = PARAMS.r1 * PARAMS.c1
    pulse_steps = 400
    rest_steps = 3000
    profile = ecm.CurrentProfile(dt=dt, segments=((5.0, pulse_steps), (0.0, rest_steps)))
    trace = ecm.simulate(PARAMS, profile, ecm.EcmState(v1=0.0, soc=0.3))
    tail = trace.v1[pulse_steps + 1:]
    t = trace.time[pulse_steps + 1:]
    slope = np.polyfit(t, np.log(tail), 1)[0]
    assert -1.0 / slope == pytest.approx(tau, rel=0.01)


def test_simulate_fine_step_matches_coarse():
    # exact ZOH: stepping 50x finer reproduces the coarse trace on shared stamps
    dt = 10.0
    k = 50
    segs_coarse = ((2.0, 30), (-1.0, 40), (0.0, 30))
    segs_fine = tuple((amp, m * k) for amp, m in segs_coarse)
    tr_c = ecm.simulate(PARAMS, ecm.CurrentProfile(dt=dt, segments=segs_coarse),
                        ecm.EcmState(v1=0.05, soc=0.5))
    tr_f = ecm.simulate(PARAMS, ecm.CurrentProfile(dt=dt / k, segments=segs_fine),
                        ecm.EcmState(v1=0.05, soc=0.5))
    assert np.abs(tr_f.voltage[::k] - tr_c.voltage).max() <= 1e-10
    assert np.abs(tr_f.soc[::k] - tr_c.soc).max() <= 1e-10


def test_simulate_decimated_equals_simulate_then_slice():
    profile = ecm.gen_random_pulse(
        ecm.PulseConfig(amp_min=1.0, amp_max=4.0, hold_min=30, hold_max=90,
                        rest_min=0, rest_max=0, sign_mode="alternating", duration=3000),
        seed=9, dt=0.1, quantum=10.0)
    initial = ecm.EcmState(v1=0.0, soc=0.5)
    run = ecm.simulate_decimated(PARAMS, profile, initial, 100)
    full = ecm.simulate(PARAMS, profile, initial)
    assert np.array_equal(run.time, full.time[::100])
    assert np.array_equal(run.voltage, full.voltage[::100])
    assert np.array_equal(run.current, full.current[::100])
    assert run.soc_min <= full.soc.min() + 1e-15
    assert run.soc_max >= full.soc.max() - 1e-15


def test_voltage_superposition():
    # linear model: response to i1+i2 = sum of branch responses + single ocv
    dt = 1.0
    segs1 = ((1.0, 50), (0.0, 50))
    segs2 = ((0.0, 25), (2.0, 75))
    p1 = ecm.CurrentProfile(dt=dt, segments=segs1)
    p2 = ecm.CurrentProfile(dt=dt, segments=segs2)
    i_sum = p1.currents() + p2.currents()
    segs_sum = []
    for val in i_sum[:-1]:
        if segs_sum and segs_sum[-1][0] == val:
            segs_sum[-1] = (val, segs_sum[-1][1] + 1)
        else:
            segs_sum.append((float(val), 1))
    p3 = ecm.CurrentProfile(dt=dt, segments=tuple(segs_sum))
    z = ecm.EcmState(v1=0.0, soc=0.0)
    tr1 = ecm.simulate(PARAMS, p1, z)
    tr2 = ecm.simulate(PARAMS, p2, z)
    tr3 = ecm.simulate(PARAMS, p3, z)
    ocv0 = PARAMS.beta2  # soc starts at 0 in all three runs
    lhs = tr3.voltage - ocv0
    rhs = (tr1.voltage - ocv0) + (tr2.voltage - ocv0)
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_gen_random_pulse_deterministic():
    cfg = ecm.PulseConfig(amp_min=0.5, amp_max=2.0, hold_min=10, hold_max=40,
                          rest_min=5, rest_max=20, sign_mode="random", duration=1000)
    a = ecm.gen_random_pulse(cfg, seed=42, dt=0.5)
    b = ecm.gen_random_pulse(cfg, seed=42, dt=0.5)
    assert a.segments == b.segments
    c = ecm.gen_random_pulse(cfg, seed=43, dt=0.5)
    assert a.segments != c.segments


def test_gen_random_pulse_no_rests_when_disabled():
    cfg = ecm.PulseConfig(amp_min=1.0, amp_max=2.0, hold_min=10, hold_max=20,
                          rest_min=0, rest_max=0, sign_mode="alternating", duration=500)
    profile = ecm.gen_random_pulse(cfg, seed=1, dt=1.0)
    assert all(amp != 0.0 for amp, _ in profile.segments)


def test_gen_random_pulse_ranges_and_alternation():
    cfg = ecm.PulseConfig(amp_min=1.0, amp_max=3.0, hold_min=20, hold_max=60,
                          rest_min=10, rest_max=30, sign_mode="alternating",
                          duration=5000)
    profile = ecm.gen_random_pulse(cfg, seed=7, dt=1.0)
    total = profile.n_steps
    assert total == 5000
    holds = [(amp, m) for amp, m in profile.segments if amp != 0.0]
    rests = [(amp, m) for amp, m in profile.segments[:-1] if amp == 0.0]
    signs = [math.copysign(1, amp) for amp, _ in holds]
    assert all(1.0 <= abs(a) <= 3.0 for a, _ in holds)
    # drawn lengths honor the bounds except a possibly truncated final segment
    assert all(20 <= m <= 60 for _, m in holds[:-1])
    assert all(10 <= m <= 30 for _, m in rests[:-1])
    assert signs[:6] == [1, -1, 1, -1, 1, -1]


def test_gen_random_pulse_quantum_alignment():
    cfg = ecm.PulseConfig(amp_min=1.0, amp_max=2.0, hold_min=15, hold_max=95,
                          rest_min=0, rest_max=40, sign_mode="fixed", duration=2000)
    profile = ecm.gen_random_pulse(cfg, seed=3, dt=0.01, quantum=10.0)
    for _, m in profile.segments:
        assert m % 1000 == 0  # every boundary lands on the 10 s grid


def test_gen_random_pulse_bad_config():
    with pytest.raises(ecm.InvalidConfigError):
        ecm.PulseConfig(amp_min=2.0, amp_max=1.0, hold_min=10, hold_max=20,
                        rest_min=0, rest_max=0, sign_mode="fixed", duration=100).validate()
    with pytest.raises(ecm.InvalidConfigError):
        ecm.PulseConfig(amp_min=1.0, amp_max=2.0, hold_min=0, hold_max=20,
                        rest_min=0, rest_max=0, sign_mode="fixed", duration=100).validate()


def test_theta_from_params_a3_is_r0():
    theta = ecm.theta_from_params(PARAMS, 10.0)
    assert theta[1] == 6.193e-3


def test_theta_dt_to_zero_limit():
    theta = ecm.theta_from_params(PARAMS, 1e-6)
    a2, a3, a4, a5 = theta
    assert a2 == pytest.approx(1.0, abs=1e-9)
    assert a4 + a5 == pytest.approx(-a3, rel=1e-6)


@given(
    r0=st.floats(1e-4, 1e-1), r1=st.floats(1e-3, 10.0),
    c1=st.floats(10.0, 1e6), dt=st.floats(1e-3, 1e3),
)
@settings(max_examples=200, deadline=None)
def test_a2_always_in_unit_interval(r0, r1, c1, dt):
    params = ecm.EcmParams(r0=r0, r1=r1, c1=c1, cap=5000.0, beta1=0.7, beta2=3.4)
    assume(dt / (r1 * c1) < 700)  # exp underflows to exactly 0.0 beyond this
    a2 = ecm.theta_from_params(params, dt)[0]
    assert 0.0 < a2 < 1.0
