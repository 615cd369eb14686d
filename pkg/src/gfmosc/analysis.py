"""
Spectra, oscillation metrics and the two sensitivity sweeps.

Spectra use a rectangular window spanning an integer number of
fundamental cycles, so with two 50 Hz cycles the bins fall on multiples
of 25 Hz. Magnitudes are single-sided amplitudes: a bin-aligned sinusoid
of amplitude ``a`` reads ``a`` in its bin.
"""
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from gfmosc.errors import ContractError, DomainError, GfmError, InfeasibleOperatingPoint
from gfmosc.network import GridEvent, nominal_grid_impedance
from gfmosc.simulator import run_scenario

# p2p window for sweeps, relative to the event: skips the first five cycles
# of the immediate step response and measures the oscillation that lingers
SWEEP_WINDOW = (0.1, 0.6)
SEVERITY_THRESHOLD = 0.015
SEVERITY_MIN_SCR = 4.8
SCR_PRE_EVENT_RATIO = 2.0


class SweepVariable(enum.Enum):
    Z_ARRAY_SCALE = "z_array_scale"
    GRID_SCR = "grid_scr"


@dataclass(frozen=True)
class Spectrum:
    bin_frequencies: np.ndarray
    magnitudes: np.ndarray
    window_start: float
    window_length: float

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.bin_frequencies, self.magnitudes]), delimiter=",",
                   header="f_hz,magnitude", comments="", fmt="%.12g")

    @property
    def dominant(self):
        """(frequency, magnitude) of the largest non-DC bin."""
        k = 1 + int(np.argmax(self.magnitudes[1:]))
        return float(self.bin_frequencies[k]), float(self.magnitudes[k])


@dataclass(frozen=True)
class OscillationMetrics:
    peak_to_peak: float
    dominant_frequency: float
    dominant_magnitude: float
    window: tuple


@dataclass(frozen=True)
class SweepPoint:
    value: float
    p_diff: OscillationMetrics
    f_diff: OscillationMetrics
    series: object
    severe: bool = False


@dataclass(frozen=True)
class SweepResult:
    sweep_variable: SweepVariable
    points: tuple

    def values(self, channel="p_diff", field="peak_to_peak"):
        return np.array([getattr(getattr(pt, channel), field) for pt in self.points])

    def rows(self):
        return [(pt.value, pt.p_diff.peak_to_peak, pt.f_diff.peak_to_peak,
                 pt.p_diff.dominant_frequency, pt.f_diff.dominant_frequency) for pt in self.points]

    def to_csv(self, path):
        np.savetxt(path, np.array(self.rows(), dtype=float).reshape(-1, 5), delimiter=",",
                   header="sweep_value,p2p_pdiff,p2p_fdiff,fdom_pdiff,fdom_fdiff",
                   comments="", fmt="%.12g")


def _sampling(t):
    if t.size < 2:
        raise ContractError("need at least two samples")
    dt = np.diff(t)
    ts = (t[-1] - t[0])/(t.size - 1)
    if np.max(np.abs(dt - ts)) > 1e-6*ts:
        raise ContractError("series is not uniformly sampled")
    return ts


def spectrum(samples, sample_period, start=0.0):
    """Single-sided amplitude spectrum of ``samples`` under a rectangular window."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    mag = np.abs(np.fft.rfft(x))/n
    mag[1:] *= 2.0
    if n % 2 == 0:
        mag[-1] /= 2.0
    freqs = np.fft.rfftfreq(n, sample_period)
    return Spectrum(freqs, mag, start, n*sample_period)


def _window_index(t, ts, start, n):
    i0 = int(np.ceil((start - t[0])/ts - 1e-6))
    if start < t[0] - 1e-9*ts or i0 < 0 or i0 + n > t.size:
        raise DomainError(f"window [{start}, {start + n*ts}] s is outside the series "
                          f"[{t[0]}, {t[-1]}] s")
    return i0


def fft_window(series, channel, start, cycles=2, f_nominal=50.0):
    """
    Spectrum of ``cycles`` fundamental cycles of a channel starting at ``start``.

    ``start`` snaps up to the next sample. The window holds
    ``cycles/(f_nominal*Ts)`` samples, so bin spacing is ``f_nominal/cycles``.
    """
    if int(cycles) != cycles or cycles < 1:
        raise DomainError(f"cycles must be a positive integer, got {cycles}")
    t = np.asarray(series["t"])
    ts = _sampling(t)
    n = int(round(cycles/(f_nominal*ts)))
    i0 = _window_index(t, ts, start, n)
    x = np.asarray(series[channel])[i0:i0 + n]
    return spectrum(x, ts, float(t[i0]))


def oscillation_metrics(series, channel, window, f_nominal=50.0):
    """Peak-to-peak and dominant spectral component of a channel over ``window``."""
    start, end = window
    t = np.asarray(series["t"])
    ts = _sampling(t)
    if end - start < 1.0/f_nominal - 1e-9:
        raise DomainError(f"window {window} is shorter than one fundamental cycle")
    mask = (t >= start - 1e-9*ts) & (t <= end + 1e-9*ts)
    x = np.asarray(series[channel])[mask]
    x = x - x.mean()
    cycles = int(np.floor((end - start)*f_nominal + 1e-9))
    spec = fft_window(series, channel, start, cycles, f_nominal)
    f_dom, m_dom = spec.dominant
    return OscillationMetrics(float(x.max() - x.min()), f_dom, m_dom, (float(start), float(end)))


def post_event_start(series):
    """First sample after the first event (or the series start if there is none)."""
    events = series.scenario.events
    if not events:
        return float(series.t[0])
    t_ev = series.scenario.event_step(events[0])*series.scenario.dt
    return float(t_ev + series.sample_period)


def sweep_window(series, offsets=SWEEP_WINDOW):
    t_ev = post_event_start(series) - series.sample_period
    return (t_ev + offsets[0], t_ev + offsets[1])


def _metrics(series, offsets):
    w = sweep_window(series, offsets)
    return (oscillation_metrics(series, "p_diff", w),
            oscillation_metrics(series, "f_diff", w))


def _run_point(args):
    value, scenario, offsets = args
    try:
        series = run_scenario(scenario)
    except GfmError as exc:
        raise type(exc)(f"sweep point {value:g}: {exc}") from exc
    pm, fm = _metrics(series, offsets)
    return value, pm, fm, series


def _execute(jobs, tasks):
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_point, tasks))
    return [_run_point(task) for task in tasks]


def _check_values(values, what):
    if len(values) == 0:
        raise DomainError(f"{what} list is empty")
    for v in values:
        if not v > 0:
            raise DomainError(f"{what} must be positive, got {v}")


def proximity_scenario(base, scale):
    """Base scenario with both array cables set to ``scale`` times the nominal grid impedance."""
    z = nominal_grid_impedance().scaled(scale)
    trains = tuple(replace(tr, z_array=z) for tr in base.network.trains)
    return replace(base, network=replace(base.network, trains=trains))


def scr_scenario(base, scr, pre_event_ratio=SCR_PRE_EVENT_RATIO):
    """
    Base scenario whose grid steps from ``pre_event_ratio*scr`` down to ``scr``.

    The event keeps the base scenario's first event time and X/R.
    """
    ev = base.events[0] if base.events else GridEvent(base.t_end/2, scr)
    net = replace(base.network, z_grid=type(base.network).from_scr(
        pre_event_ratio*scr, ev.x_over_r).z_grid)
    return replace(base, network=net, events=(replace(ev, new_scr=scr),))


def proximity_sweep(base, scales, jobs=1, offsets=SWEEP_WINDOW):
    """One run per array-cable scale; points ordered by scale."""
    _check_values(scales, "scale")
    tasks = [(float(s), proximity_scenario(base, s), offsets) for s in sorted(scales)]
    try:
        res = _execute(jobs, tasks)
    except InfeasibleOperatingPoint as exc:
        raise InfeasibleOperatingPoint(f"proximity sweep: {exc}") from exc
    points = tuple(SweepPoint(v, pm, fm, ts) for v, pm, fm, ts in res)
    return SweepResult(SweepVariable.Z_ARRAY_SCALE, points)


def scr_sweep(base, scr_values, jobs=1, offsets=SWEEP_WINDOW, pre_event_ratio=SCR_PRE_EVENT_RATIO,
              severity_threshold=SEVERITY_THRESHOLD):
    """
    One run per post-event SCR at nominal proximity; points ordered by SCR.

    Points at SCR >= 4.8 whose p_diff peak-to-peak exceeds
    ``severity_threshold`` (pu) are flagged as severe.
    """
    _check_values(scr_values, "scr")
    tasks = [(float(s), scr_scenario(base, s, pre_event_ratio), offsets) for s in sorted(scr_values)]
    res = _execute(jobs, tasks)
    points = tuple(
        SweepPoint(v, pm, fm, ts,
                   severe=bool(v >= SEVERITY_MIN_SCR and pm.peak_to_peak > severity_threshold))
        for v, pm, fm, ts in res)
    return SweepResult(SweepVariable.GRID_SCR, points)
