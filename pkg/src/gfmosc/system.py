"""
Closed-loop plant: two converter controllers coupled through the network.

The full state is a flat float64 vector with a fixed 14-slot block per
train::

    i_ld, i_lq, v_od, v_oq, i_od, i_oq,   network (common frame)
    delta, dw,                             angle relative to the common frame, pu speed
    x1..x4,                                PI integrators (VSM) or admittance states (VADM)
    p_f, q_f                               measurement filter states

Slots a given configuration does not use hold zero and have zero
derivative; ``active_mask`` selects the states that are really dynamic.
The converter angle is ``theta = omega_n*t + delta``, so ``delta`` stays
bounded while ``theta`` is unwrapped.

"""
import math

import numpy as np
from numba import njit

from gfmosc.controls import (
    ControlKind, ControlState, droop_kernel, lowpass_kernel, outer_kernel, vadm_kernel,
    vsm_kernel)
from gfmosc.network import NetworkState, filter_kernel, pcc_kernel
from gfmosc.units import DqVector, power_pq, rotate

TRAIN_SLOTS = ("i_ld", "i_lq", "v_od", "v_oq", "i_od", "i_oq", "delta", "dw",
               "x1", "x2", "x3", "x4", "p_f", "q_f")
NS = len(TRAIN_SLOTS)
N_STATES = 2*NS
S_IL, S_VO, S_IO, S_DELTA, S_DW, S_X, S_PF, S_QF = 0, 2, 4, 6, 7, 8, 12, 13

KIND_CODE = {ControlKind.VSM: 0, ControlKind.VSM0H: 1, ControlKind.VADM: 2}

# global parameter slots
G_OMEGA_B, G_F_NOM, G_RG, G_XG, G_VINF, G_CUTOFF = range(6)
NG = 8
# per-train parameter slots
(P_KIND, P_J, P_DP, P_KQ, P_PREF, P_QREF, P_VREF, P_KPV, P_KIV, P_KPC, P_KIC, P_CFC,
 P_LFC, P_LV, P_RV, P_KP, P_LF, P_CF, P_RF, P_RB, P_XB, P_CONN) = range(22)
NPT = 24

# logged channels
OUT_NAMES = ("p1", "p2", "q1", "q2", "f1", "f2", "v1", "v2", "vpcc")
N_OUT = len(OUT_NAMES)


def pack_params(network, converters, cutoff=None):
    """Flatten network and converter parameters into the kernel vector."""
    p = np.zeros(NG + 2*NPT)
    p[G_OMEGA_B] = network.base.omega_n
    p[G_F_NOM] = network.base.f_nominal
    p[G_RG] = network.z_grid.r
    p[G_XG] = network.z_grid.x
    p[G_VINF] = network.v_inf
    p[G_CUTOFF] = cutoff if cutoff else 0.0
    for k, (train, conv) in enumerate(zip(network.trains, converters)):
        o = NG + k*NPT
        outer = conv.outer
        p[o + P_KIND] = KIND_CODE[conv.kind]
        p[o + P_J] = outer.j
        p[o + P_DP] = outer.d_p
        p[o + P_KQ] = outer.k_q
        p[o + P_PREF] = outer.p_ref
        p[o + P_QREF] = outer.q_ref
        p[o + P_VREF] = outer.v_ref
        inner = conv.inner
        if conv.kind is ControlKind.VADM:
            p[o + P_LV] = inner.l_v
            p[o + P_RV] = inner.r_v
            p[o + P_KP] = inner.k_p_c
            p[o + P_LFC] = inner.l_f
        else:
            p[o + P_KPV] = inner.k_pv
            p[o + P_KIV] = inner.k_iv
            p[o + P_KPC] = inner.k_pc
            p[o + P_KIC] = inner.k_ic
            p[o + P_CFC] = inner.c_f
            p[o + P_LFC] = inner.l_f
        p[o + P_LF] = train.l_f
        p[o + P_CF] = train.c_f
        p[o + P_RF] = train.r_f
        z = train.z_branch
        p[o + P_RB] = z.r
        p[o + P_XB] = z.x
        p[o + P_CONN] = 1.0 if train.connected else 0.0
    return p


def set_grid(p, z_grid):
    p = p.copy()
    p[G_RG] = z_grid.r
    p[G_XG] = z_grid.x
    return p


def active_mask(converters, cutoff=None):
    """Boolean mask of the state slots that are dynamic for this configuration."""
    mask = np.zeros(N_STATES, dtype=bool)
    for k, conv in enumerate(converters):
        o = k*NS
        mask[o:o + S_DW] = True
        if conv.outer.j > 0:
            mask[o + S_DW] = True
        if conv.kind is ControlKind.VADM:
            if conv.inner.l_v > 0:
                mask[o + S_X:o + S_X + 2] = True
        else:
            mask[o + S_X:o + S_X + 4] = True
        if cutoff:
            mask[o + S_PF] = mask[o + S_QF] = True
    return mask


def state_labels(converters, cutoff=None):
    """Labels of every state slot, prefixed by train number and control family."""
    names = {ControlKind.VADM: {"x1": "y_d", "x2": "y_q", "x3": "unused3", "x4": "unused4"},
             ControlKind.VSM: {"x1": "xi_vd", "x2": "xi_vq", "x3": "xi_cd", "x4": "xi_cq"}}
    names[ControlKind.VSM0H] = names[ControlKind.VSM]
    labels = []
    for k, conv in enumerate(converters):
        for slot in TRAIN_SLOTS:
            name = names[conv.kind].get(slot, slot)
            group = "net" if slot[:3] in ("i_l", "v_o", "i_o") else conv.kind.value
            labels.append(f"{k + 1}.{group}.{name}")
    return labels


@njit(cache=True)
def _train(x, p, k, vpd, vpq, dx):
    """Controller and filter of train ``k``; writes its derivatives except the branch current."""
    o = k*NS
    q0 = NG + k*NPT
    omega_b = p[G_OMEGA_B]
    ild = x[o]
    ilq = x[o + 1]
    vod = x[o + 2]
    voq = x[o + 3]
    iod = x[o + 4]
    ioq = x[o + 5]
    delta = x[o + S_DELTA]

    # measurements in the converter frame
    lvod, lvoq = rotate(vod, voq, delta)
    liod, lioq = rotate(iod, ioq, delta)
    lild, lilq = rotate(ild, ilq, delta)
    p_raw, q_raw = power_pq(lvod, lvoq, liod, lioq)
    p_meas, dpf = lowpass_kernel(p[G_CUTOFF], p_raw, x[o + S_PF])
    q_meas, dqf = lowpass_kernel(p[G_CUTOFF], q_raw, x[o + S_QF])

    kind = int(p[q0 + P_KIND])
    j = p[q0 + P_J] if kind != 1 else 0.0
    dw_eff, ddw = outer_kernel(j, p[q0 + P_DP], p[q0 + P_PREF], p_meas, x[o + S_DW])
    vr_d = droop_kernel(p[q0 + P_VREF], p[q0 + P_KQ], p[q0 + P_QREF], q_meas)

    if kind == 2:
        vid, viq, dy1, dy2, _, _ = vadm_kernel(
            p[q0 + P_LV], p[q0 + P_RV], p[q0 + P_KP], p[q0 + P_LFC], 1.0, omega_b,
            x[o + S_X], x[o + S_X + 1], lvod, lvoq, liod, lioq, lild, lilq, lvod, lvoq,
            vr_d, 0.0)
        dx[o + S_X] = dy1
        dx[o + S_X + 1] = dy2
        dx[o + S_X + 2] = 0.0
        dx[o + S_X + 3] = 0.0
    else:
        vid, viq, d1, d2, d3, d4, _, _ = vsm_kernel(
            p[q0 + P_KPV], p[q0 + P_KIV], p[q0 + P_KPC], p[q0 + P_KIC], p[q0 + P_CFC],
            p[q0 + P_LFC], 1.0, x[o + S_X], x[o + S_X + 1], x[o + S_X + 2], x[o + S_X + 3],
            lvod, lvoq, liod, lioq, lild, lilq, lvod, lvoq, vr_d, 0.0)
        dx[o + S_X] = d1
        dx[o + S_X + 1] = d2
        dx[o + S_X + 2] = d3
        dx[o + S_X + 3] = d4

    vid_c, viq_c = rotate(vid, viq, -delta)
    a, b, c, d = filter_kernel(omega_b, p[q0 + P_LF], p[q0 + P_CF], p[q0 + P_RF],
                               vid_c, viq_c, vod, voq, ild, ilq, iod, ioq)
    dx[o] = a
    dx[o + 1] = b
    dx[o + 2] = c
    dx[o + 3] = d
    dx[o + S_DELTA] = omega_b*dw_eff
    dx[o + S_DW] = ddw
    dx[o + S_PF] = dpf
    dx[o + S_QF] = dqf
    return p_raw, q_raw, dw_eff


@njit(cache=True)
def _pcc(x, p):
    a = NG
    b = NG + NPT
    return pcc_kernel(x[2], x[3], x[4], x[5], p[a + P_RB], p[a + P_XB], p[a + P_CONN],
                      x[NS + 2], x[NS + 3], x[NS + 4], x[NS + 5], p[b + P_RB], p[b + P_XB],
                      p[b + P_CONN], p[G_RG], p[G_XG], p[G_VINF])


@njit(cache=True)
def derivatives(x, p, dx):
    """Evaluate the full derivative map into ``dx``; returns the logged channels."""
    vpd, vpq, a1d, a1q, a2d, a2q = _pcc(x, p)
    omega_b = p[G_OMEGA_B]
    p1, q1, w1 = _train(x, p, 0, vpd, vpq, dx)
    p2, q2, w2 = _train(x, p, 1, vpd, vpq, dx)
    c1 = p[NG + P_CONN]
    c2 = p[NG + NPT + P_CONN]
    x1 = p[NG + P_XB]
    x2 = p[NG + NPT + P_XB]
    dx[4] = c1*omega_b/x1*(a1d - vpd)
    dx[5] = c1*omega_b/x1*(a1q - vpq)
    dx[NS + 4] = c2*omega_b/x2*(a2d - vpd)
    dx[NS + 5] = c2*omega_b/x2*(a2q - vpq)
    f_nom = p[G_F_NOM]
    out = np.empty(N_OUT)
    out[0] = p1
    out[1] = p2
    out[2] = q1
    out[3] = q2
    out[4] = f_nom*(1.0 + w1)
    out[5] = f_nom*(1.0 + w2)
    out[6] = math.hypot(x[2], x[3])
    out[7] = math.hypot(x[NS + 2], x[NS + 3])
    out[8] = math.hypot(vpd, vpq)
    return out


def evaluate(x, p):
    """Derivative vector and logged channels at state ``x``."""
    dx = np.zeros(N_STATES)
    out = derivatives(np.asarray(x, dtype=float), p, dx)
    return dx, out


@njit(cache=True)
def rk4_kernel(x, p, dt, dx, k1, k2, k3, k4, xt):
    n = x.size
    derivatives(x, p, k1)
    for i in range(n):
        xt[i] = x[i] + 0.5*dt*k1[i]
    derivatives(xt, p, k2)
    for i in range(n):
        xt[i] = x[i] + 0.5*dt*k2[i]
    derivatives(xt, p, k3)
    for i in range(n):
        xt[i] = x[i] + dt*k3[i]
    derivatives(xt, p, k4)
    for i in range(n):
        dx[i] = x[i] + dt/6.0*(k1[i] + 2.0*k2[i] + 2.0*k3[i] + k4[i])


@njit(cache=True)
def integrate(x0, p0, dt, n_steps, decimation, event_steps, event_rg, event_xg):
    """
    Fixed-step RK4 from ``x0`` over ``n_steps`` steps.

    Grid impedance events take effect at the start of step ``event_steps[i]``.
    Returns ``(channels, states, status)`` where ``status`` is -1 on success
    or the index of the last finite step on blowup.
    """
    n = x0.size
    n_log = n_steps//decimation + 1
    chans = np.full((n_log, N_OUT), np.nan)
    states = np.full((n_log, n), np.nan)
    x = x0.copy()
    p = p0.copy()
    xn = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xt = np.empty(n)
    ev = 0
    row = 0
    for step in range(n_steps + 1):
        while ev < event_steps.size and event_steps[ev] == step:
            p[G_RG] = event_rg[ev]
            p[G_XG] = event_xg[ev]
            ev += 1
        if step % decimation == 0:
            chans[row, :] = derivatives(x, p, k1)
            states[row, :] = x
            row += 1
        if step == n_steps:
            break
        rk4_kernel(x, p, dt, xn, k1, k2, k3, k4, xt)
        for i in range(n):
            if not math.isfinite(xn[i]):
                return chans, states, step
        x[:] = xn
    return chans, states, -1


def to_network_state(x):
    x = np.asarray(x)
    vec = lambda o: (DqVector(x[o], x[o + 1]), DqVector(x[NS + o], x[NS + o + 1]))
    return NetworkState(vec(S_IL), vec(S_VO), vec(S_IO))


def to_control_states(x, converters, t=0.0, omega_n=2*math.pi*50.0):
    """Controller states of both trains; ``theta`` is rebuilt as ``omega_n*t + delta``."""
    states = []
    for k, conv in enumerate(converters):
        o = k*NS
        xs = x[o + S_X:o + S_X + 4]
        common = dict(theta=omega_n*t + x[o + S_DELTA], delta_omega=x[o + S_DW],
                      p_filt=x[o + S_PF], q_filt=x[o + S_QF])
        if conv.kind is ControlKind.VADM:
            states.append(ControlState(y_d=xs[0], y_q=xs[1], **common))
        else:
            states.append(ControlState(xi_vd=xs[0], xi_vq=xs[1], xi_cd=xs[2], xi_cq=xs[3], **common))
    return tuple(states)
