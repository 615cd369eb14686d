"""
Two-train plant network in the common synchronous dq frame.

Each train is an LC filter (converter-side inductor ``l_f`` with series
resistance ``r_f``, shunt capacitor ``c_f``) followed by the series branch
``z_tf + z_array`` to the common bus. The common bus reaches the infinite
bus through the Thevenin impedance ``z_grid``. Reactances are per-unit at
nominal frequency, so a branch with reactance ``x`` obeys

    (x/omega_b) di/dt = v_from - v_to - (r + jx) i

The common-bus voltage is eliminated algebraically: adding the two train
branch equations and matching them to the grid branch gives ``v_pcc`` as a
reactance-weighted average, so no fictitious bus capacitor is needed.

"""
import enum
from dataclasses import dataclass, field, replace

from numba import njit

from gfmosc.errors import ConfigurationError, DomainError
from gfmosc.units import DqVector, Impedance, PerUnitBase, scr_to_impedance

NOMINAL_SCR = 1.6
GRID_X_OVER_R = 5.0


def nominal_grid_impedance():
    """Grid impedance at the nominal SCR, the reference for array-cable scaling."""
    return scr_to_impedance(NOMINAL_SCR, GRID_X_OVER_R)


@dataclass(frozen=True)
class TrainParams:
    """
    One power train: LC filter plus the series path to the common bus.

    ``connected = False`` opens the train at the common bus (its branch
    current is held at zero).

    """
    z_tf: Impedance = Impedance(0.005, 0.06)
    z_array: Impedance = field(default_factory=lambda: nominal_grid_impedance().scaled(0.2))
    l_f: float = 0.1
    c_f: float = 0.05
    r_f: float = 0.005
    connected: bool = True

    def __post_init__(self):
        if not (self.l_f > 0 and self.c_f > 0):
            raise ConfigurationError("filter l_f and c_f must be positive")
        if self.r_f < 0:
            raise DomainError("filter r_f must be non-negative")

    @property
    def z_branch(self):
        return self.z_tf + self.z_array


@dataclass(frozen=True)
class NetworkParams:
    z_grid: Impedance
    trains: tuple = (TrainParams(), TrainParams())
    v_inf: float = 1.0
    base: PerUnitBase = PerUnitBase()

    def __post_init__(self):
        if len(self.trains) != 2:
            raise ConfigurationError("the plant has exactly two trains")
        if self.z_grid.x <= 0 or any(t.z_branch.x <= 0 for t in self.trains):
            raise ConfigurationError("series branches need positive reactance for the common-bus elimination")

    @property
    def scr(self):
        return 1.0/self.z_grid.magnitude

    @property
    def electrical_distance(self):
        """Series impedance between the two converters' capacitor nodes."""
        return self.trains[0].z_branch + self.trains[1].z_branch

    @classmethod
    def from_scr(cls, scr, x_over_r=GRID_X_OVER_R, **kwargs):
        return cls(z_grid=scr_to_impedance(scr, x_over_r), **kwargs)


@dataclass(frozen=True)
class NetworkState:
    """Per-train electrical states in the common frame: ``(train1, train2)`` tuples."""
    i_l: tuple
    v_o: tuple
    i_o: tuple

    @property
    def i_grid(self):
        return DqVector(self.i_o[0].d + self.i_o[1].d, self.i_o[0].q + self.i_o[1].q)


class EventKind(enum.Enum):
    SCR_STEP = "scr_step"


@dataclass(frozen=True)
class GridEvent:
    time: float
    new_scr: float
    x_over_r: float = GRID_X_OVER_R
    kind: EventKind = EventKind.SCR_STEP

    def __post_init__(self):
        if self.time < 0:
            raise DomainError(f"event time must be non-negative, got {self.time}")
        if not self.new_scr > 0:
            raise DomainError(f"new_scr must be positive, got {self.new_scr}")


def apply_scr_step(params, event):
    """Return the network with the grid impedance set by an SCR step event."""
    if EventKind(event.kind) is not EventKind.SCR_STEP:
        raise ConfigurationError(f"unsupported event kind {event.kind}")
    return replace(params, z_grid=scr_to_impedance(event.new_scr, event.x_over_r))


@njit(cache=True)
def pcc_kernel(v1d, v1q, i1d, i1q, r1, x1, w1, v2d, v2q, i2d, i2q, r2, x2, w2,
               rg, xg, v_inf):
    """
    Common-bus voltage. ``w1``/``w2`` are 1 for connected trains, 0 for open.

    Returns ``(vp_d, vp_q, a1_d, a1_q, a2_d, a2_q)`` where ``a_k`` is the
    train voltage behind its branch drop.
    """
    a1d = v1d - r1*i1d + x1*i1q
    a1q = v1q - r1*i1q - x1*i1d
    a2d = v2d - r2*i2d + x2*i2q
    a2q = v2q - r2*i2q - x2*i2d
    igd = w1*i1d + w2*i2d
    igq = w1*i1q + w2*i2q
    egd = v_inf + rg*igd - xg*igq
    egq = rg*igq + xg*igd
    den = 1.0/xg + w1/x1 + w2/x2
    vpd = (egd/xg + w1*a1d/x1 + w2*a2d/x2)/den
    vpq = (egq/xg + w1*a1q/x1 + w2*a2q/x2)/den
    return vpd, vpq, a1d, a1q, a2d, a2q


@njit(cache=True)
def filter_kernel(omega_b, l_f, c_f, r_f, vid, viq, vod, voq, ild, ilq, iod, ioq):
    """LC filter derivatives ``(dil_d, dil_q, dvo_d, dvo_q)``."""
    k_l = omega_b/l_f
    k_c = omega_b/c_f
    return (k_l*(vid - vod - r_f*ild + l_f*ilq),
            k_l*(viq - voq - r_f*ilq - l_f*ild),
            k_c*(ild - iod + c_f*voq),
            k_c*(ilq - ioq - c_f*vod))


def pcc_voltage(params, state):
    """Common-bus voltage for the given network state."""
    t1, t2 = params.trains
    z1, z2 = t1.z_branch, t2.z_branch
    out = pcc_kernel(state.v_o[0].d, state.v_o[0].q, state.i_o[0].d, state.i_o[0].q,
                     z1.r, z1.x, float(t1.connected),
                     state.v_o[1].d, state.v_o[1].q, state.i_o[1].d, state.i_o[1].q,
                     z2.r, z2.x, float(t2.connected),
                     params.z_grid.r, params.z_grid.x, params.v_inf)
    return DqVector(out[0], out[1])


def network_derivatives(params, state, bridge_voltages):
    """
    Time derivatives of the network states (pu/s).

    Parameters
    ----------
    params : NetworkParams
    state : NetworkState
    bridge_voltages : tuple of DqVector
        Converter bridge voltages, already in the common frame.

    Returns
    -------
    NetworkState
        Derivatives of every state, in the same layout.

    """
    omega_b = params.base.omega_n
    v_p = pcc_voltage(params, state)
    i_l, v_o, i_o = [], [], []
    for k, train in enumerate(params.trains):
        vi = bridge_voltages[k]
        dild, dilq, dvod, dvoq = filter_kernel(
            omega_b, train.l_f, train.c_f, train.r_f, vi.d, vi.q, state.v_o[k].d,
            state.v_o[k].q, state.i_l[k].d, state.i_l[k].q, state.i_o[k].d, state.i_o[k].q)
        i_l.append(DqVector(dild, dilq))
        v_o.append(DqVector(dvod, dvoq))
        if train.connected:
            z = train.z_branch
            a = complex(state.v_o[k]) - complex(z)*complex(state.i_o[k])
            i_o.append(DqVector.from_complex(omega_b/z.x*(a - complex(v_p))))
        else:
            i_o.append(DqVector(0.0, 0.0))
    return NetworkState(tuple(i_l), tuple(v_o), tuple(i_o))


def branch_losses(params, state):
    """Resistive losses in the two train branches and the grid branch (pu)."""
    i_g = state.i_grid
    loss = params.z_grid.r*i_g.magnitude**2
    for k, train in enumerate(params.trains):
        loss += train.z_branch.r*state.i_o[k].magnitude**2
    return loss

