"""
Time-domain simulation of the two-train plant.

A scenario is initialized at the Newton equilibrium of its pre-event
network and integrated with fixed-step RK4. Grid events are snapped to the
nearest step boundary and take effect at the start of that step.
"""
from dataclasses import dataclass, field

import numpy as np

from gfmosc.controls import ConverterParams, lowpass_kernel, vadm, vsm
from gfmosc.errors import ConfigurationError, DomainError, NumericalBlowup
from gfmosc.network import GridEvent, NetworkParams, apply_scr_step
from gfmosc.steady_state import solve_steady_state
from gfmosc.system import (
    G_RG, G_XG, NG, NPT, NS, OUT_NAMES, P_RB, P_XB, P_CONN, S_IO, evaluate, integrate,
    pack_params)
from gfmosc.units import scr_to_impedance

CSV_COLUMNS = ("t",) + OUT_NAMES + ("p_diff", "f_diff")


def default_converters():
    return (vsm(), vadm())


@dataclass(frozen=True)
class Scenario:
    """
    Everything needed for one run.

    ``converters`` holds one ConverterParams per train, in train order.
    ``measurement_filter_cutoff`` (rad/s) enables a first-order low-pass on
    the measured P and Q; ``None`` keeps the measurements instantaneous.
    """
    network: NetworkParams = field(default_factory=lambda: NetworkParams.from_scr(3.2))
    converters: tuple = field(default_factory=default_converters)
    events: tuple = (GridEvent(1.0, 1.6),)
    t_end: float = 2.0
    dt: float = 20e-6
    log_decimation: int = 10
    measurement_filter_cutoff: float = None

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise DomainError(f"t_end must be positive, got {self.t_end}")
        if int(self.log_decimation) != self.log_decimation or self.log_decimation < 1:
            raise ConfigurationError(f"log_decimation must be an integer >= 1, got {self.log_decimation}")
        if len(self.converters) != 2 or not all(isinstance(c, ConverterParams) for c in self.converters):
            raise ConfigurationError("a scenario needs one ConverterParams per train (two)")
        for ev in self.events:
            if not 0 < ev.time < self.t_end:
                raise ConfigurationError(f"event at t={ev.time} s is outside (0, {self.t_end})")
        cut = self.measurement_filter_cutoff
        if cut is not None and not cut > 0:
            raise DomainError(f"measurement filter cutoff must be positive, got {cut}")
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.time)))

    @property
    def n_steps(self):
        return int(round(self.t_end/self.dt))

    def event_step(self, event):
        return int(round(event.time/self.dt))

    def network_at(self, t):
        """Network in force at time ``t`` after all earlier events."""
        net = self.network
        for ev in self.events:
            if self.event_step(ev)*self.dt <= t:
                net = apply_scr_step(net, ev)
        return net


@dataclass(frozen=True)
class TimeSeries:
    """
    Logged channels on a uniform time grid.

    ``states`` holds the full state vector at every logged sample and
    ``params`` the kernel parameter vector in force at that sample, which
    is what the post-processing helpers (power balance) need.
    """
    t: np.ndarray
    channels: dict
    states: np.ndarray
    scenario: Scenario

    def __getitem__(self, name):
        if name == "t":
            return self.t
        if name == "p_diff":
            return self.channels["p1"] - self.channels["p2"]
        if name == "f_diff":
            return self.channels["f1"] - self.channels["f2"]
        try:
            return self.channels[name]
        except KeyError:
            raise ConfigurationError(f"unknown channel '{name}'") from None

    @property
    def sample_period(self):
        return self.scenario.dt*self.scenario.log_decimation

    @property
    def p_diff(self):
        return self["p_diff"]

    @property
    def f_diff(self):
        return self["f_diff"]

    def table(self):
        return np.column_stack([self[name] for name in CSV_COLUMNS])

    def to_csv(self, path):
        np.savetxt(path, self.table(), delimiter=",", header=",".join(CSV_COLUMNS),
                   comments="", fmt="%.12g")


def rk4_step(derivative_map, state, dt, t=0.0):
    """
    One classical fourth-order Runge-Kutta step.

    ``derivative_map(t, x)`` returns dx/dt. Raises NumericalBlowup if any
    stage derivative is not finite.
    """
    x = np.asarray(state, dtype=float)

    def f(tau, y):
        d = np.asarray(derivative_map(tau, y), dtype=float)
        if not np.all(np.isfinite(d)):
            raise NumericalBlowup("non-finite derivative", t)
        return d

    k1 = f(t, x)
    k2 = f(t + dt/2, x + dt/2*k1)
    k3 = f(t + dt/2, x + dt/2*k2)
    k4 = f(t + dt, x + dt*k3)
    return x + dt/6*(k1 + 2*k2 + 2*k3 + k4)


def apply_measurement_filter(cutoff, raw, state):
    """First-order low-pass; ``cutoff`` of None or 0 passes ``raw`` through."""
    return lowpass_kernel(float(cutoff or 0.0), float(raw), float(state))


def run_scenario(scenario):
    """Integrate a scenario from its pre-event equilibrium; returns a TimeSeries."""
    sc = scenario
    ss = solve_steady_state(sc.network, sc.converters, sc.measurement_filter_cutoff)
    p = pack_params(sc.network, sc.converters, sc.measurement_filter_cutoff)
    steps, rg, xg = [], [], []
    for ev in sc.events:
        z = scr_to_impedance(ev.new_scr, ev.x_over_r)
        steps.append(sc.event_step(ev))
        rg.append(z.r)
        xg.append(z.x)
    chans, states, status = integrate(
        ss.x, p, sc.dt, sc.n_steps, int(sc.log_decimation),
        np.array(steps, dtype=np.int64), np.array(rg, dtype=float), np.array(xg, dtype=float))
    t = np.arange(chans.shape[0])*sc.dt*sc.log_decimation
    if status != -1:
        raise NumericalBlowup("state became non-finite", status*sc.dt)
    channels = {name: chans[:, i].copy() for i, name in enumerate(OUT_NAMES)}
    return TimeSeries(t=t, channels=channels, states=states, scenario=sc)


def _grid_params(series):
    """Kernel parameter vector in force at each logged sample."""
    sc = series.scenario
    base = pack_params(sc.network, sc.converters, sc.measurement_filter_cutoff)
    out = np.repeat(base[None, :], series.t.size, axis=0)
    step = np.arange(series.t.size)*sc.log_decimation
    for ev in sc.events:
        z = scr_to_impedance(ev.new_scr, ev.x_over_r)
        hit = step >= sc.event_step(ev)
        out[hit, G_RG] = z.r
        out[hit, G_XG] = z.x
    return out


def power_balance(series):
    """
    Residual ``P1 + P2 - P_grid - P_losses`` at every logged sample (pu).

    ``P_grid`` is delivered to the infinite bus. ``P_losses`` is the series
    resistance dissipation plus the rate of change of the magnetic energy
    stored in the branch reactances, so the identity also holds mid-transient.
    """
    params = _grid_params(series)
    x_all = series.states
    res = np.empty(series.t.size)
    omega_b = series.scenario.network.base.omega_n
    v_inf = series.scenario.network.v_inf
    for n in range(series.t.size):
        p, x = params[n], x_all[n]
        dx, out = evaluate(x, p)
        i_g = np.zeros(2)
        di_g = np.zeros(2)
        loss = 0.0
        for k in range(2):
            o, q = k*NS + S_IO, NG + k*NPT
            w = p[q + P_CONN]
            i = x[o:o + 2]*w
            di = dx[o:o + 2]*w
            i_g += i
            di_g += di
            loss += p[q + P_RB]*(i @ i) + p[q + P_XB]/omega_b*(i @ di)
        loss += p[G_RG]*(i_g @ i_g) + p[G_XG]/omega_b*(i_g @ di_g)
        res[n] = out[0] + out[1] - v_inf*i_g[0] - loss
    return res


def frequency_of(delta_omega, f_nominal=50.0):
    """Electrical frequency (Hz) for a per-unit speed deviation."""
    return f_nominal*(1.0 + delta_omega)

