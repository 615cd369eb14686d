import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfmosc.controls import (
    ControlKind, ControlState, ConverterParams, MeasurementSet, OuterLoopParams,
    VadmInnerParams, VsmInnerParams, control_step, frequency_hz, outer_loop_derivatives,
    reactive_droop, vadm, vadm_inner_loops, vsm, vsm0h, vsm_inner_loops)
from gfmosc.errors import ConfigurationError, ContractError, DomainError
from gfmosc.network import NetworkParams
from gfmosc.simulator import rk4_step
from gfmosc.steady_state import solve_steady_state
from gfmosc.system import evaluate, pack_params
from gfmosc.units import DqVector, PerUnitBase

W_N = PerUnitBase().omega_n


def meas(v_o=(1.0, 0.0), i_o=(0.0, 0.0), i_l=(0.0, 0.0), v_g=None, frame="converter"):
    vo = DqVector(*v_o, frame)
    vg = vo if v_g is None else DqVector(*v_g, frame)
    return MeasurementSet.from_vectors(vo, DqVector(*i_o, frame), DqVector(*i_l, frame), vg)


# outer loop

def test_outer_equilibrium():
    params = OuterLoopParams(p_ref=0.4)
    assert outer_loop_derivatives(params, ControlState(), 0.4, W_N) == (W_N, 0.0)


def test_zero_inertia_branch():
    params = OuterLoopParams(j=0.0, d_p=50.0, p_ref=0.5)
    d_theta, d_dw = outer_loop_derivatives(params, ControlState(), 0.4, W_N)
    assert d_theta == pytest.approx(W_N*(1 + 0.002), rel=1e-15)
    assert d_dw == 0.0


def test_zero_damping_rejected():
    with pytest.raises(DomainError):
        OuterLoopParams(d_p=0.0)


def test_swing_step_response():
    # closed form: dw(t) = dP/Dp (1 - exp(-t Dp/J))
    params = OuterLoopParams(j=2.0, d_p=40.0, p_ref=0.5)
    dP, dt = 0.1, 20e-6

    def f(t, x):
        return [outer_loop_derivatives(params, ControlState(delta_omega=x[0]), 0.4, W_N)[1]]

    x, t = np.zeros(1), 0.0
    for _ in range(5000):
        x = rk4_step(f, x, dt, t)
        t += dt
    exact = dP/40.0*(1 - math.exp(-t*40.0/2.0))
    assert x[0] == pytest.approx(exact, rel=1e-9)


def test_vsm_tends_to_zero_inertia_branch():
    # theta of a J=1e-6 VSM vs the algebraic branch over 0.1 s on a fixed power error;
    # the fast pole (J/Dp = 2e-8 s) is handled with backward Euler on the same derivative map
    stiff = OuterLoopParams(j=1e-6, d_p=50.0, p_ref=0.5)
    algebraic = OuterLoopParams(j=0.0, d_p=50.0, p_ref=0.5)
    dt, steps = 1e-5, 10000
    dw, theta_vsm, theta_alg = 0.0, 0.0, 0.0
    w_alg = outer_loop_derivatives(algebraic, ControlState(), 0.4, W_N)[0]
    for _ in range(steps):
        f0 = outer_loop_derivatives(stiff, ControlState(delta_omega=0.0), 0.4, W_N)[1]
        f1 = outer_loop_derivatives(stiff, ControlState(delta_omega=1.0), 0.4, W_N)[1]
        slope = f1 - f0
        dw = (dw + dt*f0)/(1 - dt*slope)
        theta_vsm += dt*outer_loop_derivatives(stiff, ControlState(delta_omega=dw), 0.4, W_N)[0]
        theta_alg += dt*w_alg
    assert abs(theta_vsm - theta_alg) < 1e-4


# reactive droop

def test_droop_examples():
    params = OuterLoopParams(k_q=0.05, q_ref=0.0, v_ref=1.0)
    v = reactive_droop(params, 0.1)
    assert (v.d, v.q) == (pytest.approx(1.005, abs=1e-15), 0.0)
    v = reactive_droop(params, 0.0)
    assert (v.d, v.q) == (1.0, 0.0)
    v = reactive_droop(OuterLoopParams(k_q=0.0), 3.7)
    assert (v.d, v.q) == (1.0, 0.0)


@given(st.floats(-5, 5), st.floats(0, 1), st.floats(-2, 2), st.floats(0.5, 1.5))
def test_droop_q_axis_is_zero(q, k_q, q_ref, v_ref):
    v = reactive_droop(OuterLoopParams(k_q=k_q, q_ref=q_ref, v_ref=v_ref), q)
    assert v.q == 0.0


# VSM inner loops

def test_vsm_decoupling_only():
    params = VsmInnerParams(c_f=0.05, l_f=0.1)
    m = meas(v_o=(1.0, 0.0), i_o=(0.5, -0.05), i_l=(0.5, 0.0))
    v_i, _, i_ref = vsm_inner_loops(params, ControlState(), m, DqVector(1.0, 0.0, "converter"))
    assert (i_ref.d, i_ref.q) == pytest.approx((0.5, -0.05 + 0.05), abs=1e-15)
    assert (v_i.d, v_i.q) == pytest.approx((1.0, 0.05), abs=1e-15)


def test_vsm_zero_state():
    m = meas(v_o=(0.0, 0.0))
    v_i, d, i_ref = vsm_inner_loops(VsmInnerParams(), ControlState(), m, DqVector(0, 0, "converter"))
    assert (v_i.d, v_i.q, i_ref.d, i_ref.q) == (0, 0, 0, 0)
    assert all(v == 0 for v in d.as_dict().values())


def test_vsm_voltage_pi_matches_transfer_function():
    # frozen plant, step error e on the d axis: i_ref_d(t) = i_o + k_pv e + k_iv e t
    params = VsmInnerParams(k_pv=0.4, k_iv=30.0)
    m = meas(v_o=(0.95, 0.0), i_o=(0.2, 0.0), i_l=(0.2, 0.0))
    v_ref = DqVector(1.0, 0.0, "converter")
    e, dt = 0.05, 20e-6

    def f(t, x):
        st_ = ControlState(xi_vd=x[0], xi_vq=x[1], xi_cd=x[2], xi_cq=x[3])
        d = vsm_inner_loops(params, st_, m, v_ref)[1]
        return [d.xi_vd, d.xi_vq, d.xi_cd, d.xi_cq]

    x, t = np.zeros(4), 0.0
    for _ in range(2500):
        x = rk4_step(f, x, dt, t)
        t += dt
    st_ = ControlState(xi_vd=x[0], xi_vq=x[1])
    i_ref = vsm_inner_loops(params, st_, m, v_ref)[2]
    expected = 0.2 + 0.4*e + 30.0*e*t
    assert i_ref.d == pytest.approx(expected, rel=1e-3)


def test_vsm_current_pi_matches_transfer_function():
    # with i_ref - i_l = e_c held, v_i_d(t) = v_g + k_pc e_c + k_ic e_c t - l_f i_lq
    params = VsmInnerParams(k_pc=2.0, k_ic=50.0, c_f=0.05)
    m = meas(v_o=(1.0, 0.0), i_o=(0.3, -0.05), i_l=(0.25, 0.0))
    v_ref = DqVector(1.0, 0.0, "converter")
    e_c = 0.05

    def f(t, x):
        d = vsm_inner_loops(params, ControlState(xi_cd=x[0], xi_cq=x[1]), m, v_ref)[1]
        return [d.xi_cd, d.xi_cq]

    x, t, dt = np.zeros(2), 0.0, 20e-6
    for _ in range(1000):
        x = rk4_step(f, x, dt, t)
        t += dt
    v_i = vsm_inner_loops(params, ControlState(xi_cd=x[0], xi_cq=x[1]), m, v_ref)[0]
    assert v_i.d == pytest.approx(1.0 + 2.0*e_c + 50.0*e_c*t, rel=1e-3)


# VAdm inner loops

def test_vadm_dc_gain():
    params = VadmInnerParams(l_v=0.3, r_v=0.2)
    m = meas(v_o=(0.98, 0.01))
    v_ref = DqVector(1.0, 0.0, "converter")
    y = (0.02/0.2, -0.01/0.2)
    _, d, i_ref = vadm_inner_loops(params, ControlState(y_d=y[0], y_q=y[1]), m, v_ref)
    assert (d.y_d, d.y_q) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert (i_ref.d, i_ref.q) == pytest.approx(y, abs=1e-15)


def test_vadm_first_order_response():
    params = VadmInnerParams(l_v=0.4, r_v=0.5)
    m = meas(v_o=(0.97, 0.0))
    v_ref = DqVector(1.0, 0.0, "converter")
    tau = 0.4/(W_N*0.5)

    def f(t, x):
        d = vadm_inner_loops(params, ControlState(y_d=x[0], y_q=x[1]), m, v_ref)[1]
        return [d.y_d, d.y_q]

    x, t, dt = np.zeros(2), 0.0, 20e-6
    for _ in range(300):
        x = rk4_step(f, x, dt, t)
        t += dt
    assert x[0] == pytest.approx(0.03/0.5*(1 - math.exp(-t/tau)), rel=1e-3)


def test_vadm_algebraic_branch():
    params = VadmInnerParams(l_v=0.0, r_v=0.25)
    m = meas(v_o=(0.99, 0.02))
    _, d, i_ref = vadm_inner_loops(params, ControlState(), m, DqVector(1.0, 0.0, "converter"))
    assert (i_ref.d, i_ref.q) == pytest.approx((0.01/0.25, -0.02/0.25), abs=1e-15)
    assert (d.y_d, d.y_q) == (0.0, 0.0)


def test_vadm_perfect_tracking():
    params = VadmInnerParams(l_v=0.2, r_v=0.1, l_f=0.0)
    m = meas(v_o=(1.0, 0.0), i_o=(0.3, 0.1), i_l=(0.35, 0.08), v_g=(0.99, 0.01))
    st_ = ControlState(y_d=0.05, y_q=-0.02)
    v_i, _, i_ref = vadm_inner_loops(params, st_, m, DqVector(1.0, 0.0, "converter"))
    assert (i_ref.d, i_ref.q) == pytest.approx((0.35, 0.08), abs=1e-15)
    assert (v_i.d, v_i.q) == pytest.approx((0.99, 0.01), abs=1e-15)


# dispatch

def test_variant_mismatch():
    with pytest.raises(ConfigurationError):
        ConverterParams(ControlKind.VADM, OuterLoopParams(), VsmInnerParams())
    with pytest.raises(ConfigurationError):
        ConverterParams(ControlKind.VSM0H, OuterLoopParams(j=1.0), VsmInnerParams())
    with pytest.raises(ConfigurationError):
        control_step(ControlKind.VSM, vadm(), ControlState(), meas())


def test_mixed_frames_rejected():
    with pytest.raises(ContractError):
        MeasurementSet(DqVector(1, 0, "a"), DqVector(0, 0, "b"), DqVector(0, 0, "a"),
                       DqVector(1, 0, "a"), 0.0, 0.0)


def test_vsm_equilibrium_has_zero_derivatives():
    # p = p_ref, q = q_ref, v_o = (v_ref, 0), inner errors zero
    conv = vsm(p_ref=0.4)
    c_f = conv.inner.c_f
    m = meas(v_o=(1.0, 0.0), i_o=(0.4, 0.0), i_l=(0.4, c_f))
    v_i, d = control_step(ControlKind.VSM, conv, ControlState(), m)
    values = d.as_dict()
    assert values.pop("theta") == pytest.approx(W_N)
    assert all(v == pytest.approx(0.0, abs=1e-15) for v in values.values())


def test_zero_inertia_matches_vsm_bridge_voltage():
    m = meas(v_o=(1.01, -0.02), i_o=(0.41, 0.03), i_l=(0.43, 0.07))
    st_ = ControlState(delta_omega=(0.4 - m.p_meas)/35.0, xi_vd=0.01, xi_cq=-0.02)
    v1, d1 = control_step(ControlKind.VSM, vsm(p_ref=0.4), st_, m)
    v0, d0 = control_step(ControlKind.VSM0H, vsm0h(p_ref=0.4), st_, m)
    assert (v0.d, v0.q) == (v1.d, v1.q)
    assert d0.theta == pytest.approx(d1.theta, rel=1e-15)


def test_frequency_reporting():
    params = OuterLoopParams(j=0.0, d_p=50.0, p_ref=0.5)
    assert frequency_hz(params, ControlState(), 0.4) == pytest.approx(50.0*1.002)


def test_kernel_equilibrium_at_newton_point():
    net = NetworkParams.from_scr(3.2)
    convs = (vsm(), vadm())
    ss = solve_steady_state(net, convs)
    dx, _ = evaluate(ss.x, pack_params(net, convs))
    assert np.max(np.abs(dx)) < 1e-8
