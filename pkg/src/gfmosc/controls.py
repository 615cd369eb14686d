"""
Grid-forming converter control laws.

Two control families share the same outer power loop (a swing-equation
angle generator plus a reactive droop) and differ in the inner loops:

* VSM: cascaded PI voltage and current controllers with dq decoupling.
* VADM: a virtual admittance ``1/(s*L_v + R_v)`` turning the voltage error
  into a current correction, followed by a proportional current controller.

VSM0H is the VSM with the inertia removed (``j = 0``), in which case the
speed deviation becomes an algebraic function of the power error.

The numba kernels below are what the time-domain simulator evaluates; the
public functions wrap them with dataclass arguments.

"""
import enum
from dataclasses import dataclass, fields

from numba import njit

from gfmosc.errors import ConfigurationError, ContractError, DomainError
from gfmosc.units import DqVector, PerUnitBase, power_pq


class ControlKind(enum.Enum):
    VSM = "vsm"
    VSM0H = "vsm0h"
    VADM = "vadm"


@dataclass(frozen=True)
class OuterLoopParams:
    """
    Active power (swing) and reactive droop loop.

    Parameters
    ----------
    j : float
        Virtual inertia (s). The speed deviation obeys
        ``j*d(dw)/dt = p_ref - p_meas - d_p*dw`` with ``dw`` in pu.
    d_p : float
        Damping, pu power per pu speed deviation.
    k_q : float
        Reactive droop, pu voltage per pu reactive power.
    p_ref, q_ref, v_ref : float
        Power and voltage set-points (pu).

    """
    j: float = 2.6
    d_p: float = 35.0
    k_q: float = 0.02
    p_ref: float = 0.4
    q_ref: float = 0.0
    v_ref: float = 1.0

    def __post_init__(self):
        if not self.d_p > 0:
            raise DomainError(f"d_p must be positive (undamped loop), got {self.d_p}")
        if self.j < 0:
            raise DomainError(f"j must be non-negative, got {self.j}")
        if self.k_q < 0:
            raise DomainError(f"k_q must be non-negative, got {self.k_q}")


@dataclass(frozen=True)
class VsmInnerParams:
    """PI gains of the voltage and current loops and the filter model used for decoupling."""
    k_pv: float = 0.08
    k_iv: float = 0.8
    k_pc: float = 11.0
    k_ic: float = 12.0
    c_f: float = 0.05
    l_f: float = 0.1

    def __post_init__(self):
        for name in ("k_pv", "k_iv", "k_pc", "k_ic"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if not (self.c_f > 0 and self.l_f > 0):
            raise DomainError("c_f and l_f must be positive")


@dataclass(frozen=True)
class VadmInnerParams:
    """Virtual admittance ``1/(s*l_v + r_v)`` and proportional current gain ``k_p_c``."""
    l_v: float = 1.2
    r_v: float = 0.47
    k_p_c: float = 3.0
    l_f: float = 0.1

    def __post_init__(self):
        if not self.r_v > 0:
            raise DomainError(f"r_v must be positive, got {self.r_v}")
        if self.l_v < 0:
            raise DomainError(f"l_v must be non-negative, got {self.l_v}")
        if not self.k_p_c > 0:
            raise DomainError(f"k_p_c must be positive, got {self.k_p_c}")
        if self.l_f < 0:
            raise DomainError(f"l_f must be non-negative, got {self.l_f}")


@dataclass(frozen=True)
class ConverterParams:
    """A converter's control family together with its outer and inner loop settings."""
    kind: ControlKind
    outer: OuterLoopParams
    inner: object

    def __post_init__(self):
        check_variant(self.kind, self.outer, self.inner)

    @property
    def has_inertia(self):
        return self.outer.j > 0


def check_variant(kind, outer, inner):
    if kind is ControlKind.VADM:
        if not isinstance(inner, VadmInnerParams):
            raise ConfigurationError("VADM control needs VadmInnerParams")
        return
    if not isinstance(inner, VsmInnerParams):
        raise ConfigurationError(f"{kind.name} control needs VsmInnerParams")
    if kind is ControlKind.VSM0H and outer.j != 0:
        raise ConfigurationError("VSM0H is the zero-inertia variant; set j = 0")
    if kind is ControlKind.VSM and outer.j == 0:
        raise ConfigurationError("VSM with j = 0 is VSM0H; select that kind instead")


def vsm(**outer):
    return ConverterParams(ControlKind.VSM, OuterLoopParams(**outer), VsmInnerParams())


def vsm0h(**outer):
    outer.setdefault("j", 0.0)
    return ConverterParams(ControlKind.VSM0H, OuterLoopParams(**outer), VsmInnerParams())


def vadm(**outer):
    return ConverterParams(ControlKind.VADM, OuterLoopParams(**outer), VadmInnerParams())


@dataclass(frozen=True)
class ControlState:
    """
    Dynamic states of one converter controller.

    ``theta`` is the converter angle (rad, unwrapped) and ``delta_omega`` the
    speed deviation in pu of the nominal speed. Fields unused by a control
    family stay at zero. The same container holds time derivatives.

    """
    theta: float = 0.0
    delta_omega: float = 0.0
    xi_vd: float = 0.0
    xi_vq: float = 0.0
    xi_cd: float = 0.0
    xi_cq: float = 0.0
    y_d: float = 0.0
    y_q: float = 0.0
    p_filt: float = 0.0
    q_filt: float = 0.0

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class MeasurementSet:
    """Local-frame measurements fed to the controller."""
    v_o: DqVector
    i_o: DqVector
    i_l: DqVector
    v_g: DqVector
    p_meas: float
    q_meas: float

    def __post_init__(self):
        frames = {self.v_o.frame, self.i_o.frame, self.i_l.frame, self.v_g.frame}
        if len(frames) != 1:
            raise ContractError(f"measurements resolved in mixed frames {sorted(frames)}")

    @classmethod
    def from_vectors(cls, v_o, i_o, i_l, v_g=None):
        """Build a measurement set, computing powers at the capacitor node."""
        p, q = power_pq(v_o.d, v_o.q, i_o.d, i_o.q)
        return cls(v_o, i_o, i_l, v_o if v_g is None else v_g, p, q)


# Kernels: plain floats in, tuples out.

@njit(cache=True)
def outer_kernel(j, d_p, p_ref, p_meas, dw):
    """Return the effective speed deviation and its derivative (0 when j = 0)."""
    if j > 0.0:
        return dw, (p_ref - p_meas - d_p*dw)/j
    return (p_ref - p_meas)/d_p, 0.0


@njit(cache=True)
def droop_kernel(v_ref, k_q, q_ref, q_meas):
    return v_ref - k_q*(q_ref - q_meas)


@njit(cache=True)
def vsm_kernel(k_pv, k_iv, k_pc, k_ic, c_f, l_f, omega,
               xi_vd, xi_vq, xi_cd, xi_cq,
               v_od, v_oq, i_od, i_oq, i_ld, i_lq, v_gd, v_gq, vr_d, vr_q):
    ev_d = vr_d - v_od
    ev_q = vr_q - v_oq
    il_ref_d = i_od + k_pv*ev_d + xi_vd - omega*c_f*v_oq
    il_ref_q = i_oq + k_pv*ev_q + xi_vq + omega*c_f*v_od
    ec_d = il_ref_d - i_ld
    ec_q = il_ref_q - i_lq
    vi_d = v_gd + k_pc*ec_d + xi_cd - omega*l_f*i_lq
    vi_q = v_gq + k_pc*ec_q + xi_cq + omega*l_f*i_ld
    return (vi_d, vi_q, k_iv*ev_d, k_iv*ev_q, k_ic*ec_d, k_ic*ec_q,
            il_ref_d, il_ref_q)


@njit(cache=True)
def vadm_kernel(l_v, r_v, k_p, l_f, omega, omega_b, y_d, y_q,
                v_od, v_oq, i_od, i_oq, i_ld, i_lq, v_gd, v_gq, vr_d, vr_q):
    ev_d = vr_d - v_od
    ev_q = vr_q - v_oq
    if l_v > 0.0:
        dy_d = omega_b*(ev_d - r_v*y_d)/l_v
        dy_q = omega_b*(ev_q - r_v*y_q)/l_v
    else:
        y_d = ev_d/r_v
        y_q = ev_q/r_v
        dy_d = 0.0
        dy_q = 0.0
    il_ref_d = i_od + y_d
    il_ref_q = i_oq + y_q
    vi_d = v_gd + k_p*(il_ref_d - i_ld) - omega*l_f*i_lq
    vi_q = v_gq + k_p*(il_ref_q - i_lq) + omega*l_f*i_ld
    return vi_d, vi_q, dy_d, dy_q, il_ref_d, il_ref_q


@njit(cache=True)
def lowpass_kernel(cutoff, raw, state):
    if cutoff > 0.0:
        return state, cutoff*(raw - state)
    return raw, 0.0


# Public surface.

def outer_loop_derivatives(params, state, p_meas, omega_n):
    """
    Angle and speed derivatives of the swing-equation power loop.

    Parameters
    ----------
    params : OuterLoopParams
    state : ControlState
    p_meas : float
        Measured active power (pu).
    omega_n : float
        Nominal angular frequency (rad/s).

    Returns
    -------
    d_theta_dt : float
        Converter angular speed (rad/s).
    d_delta_omega_dt : float
        Derivative of the pu speed deviation (1/s); zero when ``j = 0``.

    """
    dw, ddw = outer_kernel(params.j, params.d_p, params.p_ref, float(p_meas), state.delta_omega)
    return omega_n*(1.0 + dw), ddw


def reactive_droop(params, q_meas, frame="converter"):
    """Voltage reference from the reactive droop; the q-axis component is always zero."""
    return DqVector(droop_kernel(params.v_ref, params.k_q, params.q_ref, float(q_meas)), 0.0, frame)


def _unpack(meas, v_ref):
    if v_ref.frame != meas.v_o.frame:
        raise ContractError("voltage reference and measurements in different frames")
    return (meas.v_o.d, meas.v_o.q, meas.i_o.d, meas.i_o.q, meas.i_l.d, meas.i_l.q,
            meas.v_g.d, meas.v_g.q, v_ref.d, v_ref.q)


def vsm_inner_loops(params, state, meas, v_ref, omega_n=1.0):
    """
    Cascaded PI voltage/current loops of the VSM.

    ``omega_n`` is the decoupling speed in pu (1 at nominal frequency).
    Returns ``(v_i_ref, derivatives, i_l_ref)``: the bridge voltage
    reference, a ``ControlState`` holding the integrator derivatives, and the
    inductor current reference produced by the voltage loop.

    """
    out = vsm_kernel(params.k_pv, params.k_iv, params.k_pc, params.k_ic, params.c_f,
                     params.l_f, omega_n, state.xi_vd, state.xi_vq, state.xi_cd,
                     state.xi_cq, *_unpack(meas, v_ref))
    frame = meas.v_o.frame
    derivs = ControlState(xi_vd=out[2], xi_vq=out[3], xi_cd=out[4], xi_cq=out[5])
    return DqVector(out[0], out[1], frame), derivs, DqVector(out[6], out[7], frame)


def vadm_inner_loops(params, state, meas, v_ref, omega_n=1.0, base=PerUnitBase()):
    """
    Virtual-admittance voltage correction and proportional current loop.

    The admittance state ``y`` obeys ``(l_v/omega_b)*dy/dt = (v_ref - v_o) - r_v*y``,
    so its time constant is ``l_v/(omega_b*r_v)`` seconds. With ``l_v = 0``
    the admittance is purely resistive and ``y`` is algebraic.

    """
    out = vadm_kernel(params.l_v, params.r_v, params.k_p_c, params.l_f, omega_n,
                      base.omega_n, state.y_d, state.y_q, *_unpack(meas, v_ref))
    frame = meas.v_o.frame
    derivs = ControlState(y_d=out[2], y_q=out[3])
    return DqVector(out[0], out[1], frame), derivs, DqVector(out[4], out[5], frame)


def control_step(kind, params, state, meas, base=PerUnitBase(), omega_pu=1.0):
    """
    Evaluate one converter controller.

    Returns the average-model bridge voltage reference in the converter frame
    and a ``ControlState`` of derivatives (``theta`` derivative in rad/s).
    Measurement filtering is not applied here; ``meas.p_meas`` and
    ``meas.q_meas`` are used as given.

    """
    kind = ControlKind(kind)
    if kind is not params.kind:
        raise ConfigurationError(f"control kind {kind.name} does not match parameters for {params.kind.name}")
    check_variant(kind, params.outer, params.inner)
    d_theta, d_dw = outer_loop_derivatives(params.outer, state, meas.p_meas, base.omega_n)
    v_ref = reactive_droop(params.outer, meas.q_meas, meas.v_o.frame)
    if kind is ControlKind.VADM:
        v_i, inner, _ = vadm_inner_loops(params.inner, state, meas, v_ref, omega_pu, base)
    else:
        v_i, inner, _ = vsm_inner_loops(params.inner, state, meas, v_ref, omega_pu)
    values = inner.as_dict()
    values["theta"] = d_theta
    values["delta_omega"] = d_dw
    return v_i, ControlState(**values)


def speed_deviation(params, state, p_meas):
    """Speed deviation in pu, evaluating the algebraic branch when there is no inertia."""
    dw, _ = outer_kernel(params.j, params.d_p, params.p_ref, float(p_meas), state.delta_omega)
    return dw


def frequency_hz(params, state, p_meas, base=PerUnitBase()):
    return base.f_nominal*(1.0 + speed_deviation(params, state, p_meas))

