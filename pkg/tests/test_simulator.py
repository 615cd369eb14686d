import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import preset_series
from gfmosc.analysis import fft_window, post_event_start
from gfmosc.controls import (
    ControlKind, ConverterParams, OuterLoopParams, VadmInnerParams, VsmInnerParams, vsm)
from gfmosc.errors import ConfigurationError, DomainError, NumericalBlowup
from gfmosc.network import GridEvent, NetworkParams
from gfmosc.simulator import (
    CSV_COLUMNS, Scenario, apply_measurement_filter, frequency_of, power_balance, rk4_step,
    run_scenario)
from gfmosc.steady_state import solve_steady_state


# integrator

def test_rk4_constant():
    x = rk4_step(lambda t, x: np.zeros_like(x), np.array([3.5, -1.0]), 1e-3)
    assert np.array_equal(x, [3.5, -1.0])


def test_rk4_exponential_step_error():
    x, t, dt = np.array([1.0]), 0.0, 1e-3
    for _ in range(1000):
        x_new = rk4_step(lambda t, y: -y, x, dt, t)
        assert abs(x_new[0] - x[0]*math.exp(-dt)) < 1e-12
        x, t = x_new, t + dt


def oscillator_error(dt, t_end=1.92):
    w = 2*math.pi*3.0
    x = np.array([1.0, 0.0])
    for k in range(int(round(t_end/dt))):
        x = rk4_step(lambda t, y: np.array([y[1], -w*w*y[0]]), x, dt, k*dt)
    return abs(x[0] - math.cos(w*t_end))


def rk4_order():
    return math.log2(oscillator_error(4e-3)/oscillator_error(2e-3))


def test_rk4_order():
    assert rk4_order() >= 3.9


def test_rk4_nonfinite_derivative():
    with pytest.raises(NumericalBlowup) as info:
        rk4_step(lambda t, y: np.array([math.inf]), np.array([1.0]), 0.1, t=0.7)
    assert info.value.time == 0.7


# measurement filter

def test_measurement_filter_examples():
    assert apply_measurement_filter(100.0, 0.3, 0.3) == (0.3, 0.0)
    assert apply_measurement_filter(None, 0.7, 0.1)[0] == 0.7
    assert apply_measurement_filter(0.0, 0.7, 0.1)[0] == 0.7
    cutoff, dt = 200.0, 1e-4
    f = lambda t, x: [apply_measurement_filter(cutoff, 1.0, x[0])[1]]
    x = np.zeros(1)
    for k in range(100):
        x = rk4_step(f, x, dt, k*dt)
    assert x[0] == pytest.approx(1 - math.exp(-cutoff*100*dt), rel=1e-9)


def test_filtered_run_starts_at_equilibrium():
    sc = Scenario(events=(), t_end=0.2, measurement_filter_cutoff=300.0)
    series = run_scenario(sc)
    assert np.ptp(series["p1"]) < 1e-8


# scenarios

def test_scenario_validation():
    with pytest.raises(DomainError):
        Scenario(dt=0.0)
    with pytest.raises(DomainError):
        Scenario(t_end=-1.0)
    with pytest.raises(ConfigurationError):
        Scenario(events=(GridEvent(3.0, 1.6),), t_end=2.0)
    with pytest.raises(ConfigurationError):
        Scenario(log_decimation=0)
    with pytest.raises(ConfigurationError):
        Scenario(converters=(vsm(),))
    with pytest.raises(DomainError):
        Scenario(measurement_filter_cutoff=-5.0)


def test_events_sorted_and_network_at():
    sc = Scenario(events=(GridEvent(1.5, 8.0), GridEvent(0.5, 1.6)))
    assert [e.time for e in sc.events] == [0.5, 1.5]
    assert sc.network_at(0.0).scr == pytest.approx(3.2)
    assert sc.network_at(1.0).scr == pytest.approx(1.6)
    assert sc.network_at(2.0).scr == pytest.approx(8.0)


def test_matched_vsm_stays_symmetric():
    s = preset_series("fig3a")
    assert np.max(np.abs(s.p_diff)) < 1e-6


def test_no_event_run_is_constant():
    s = run_scenario(Scenario(events=()))
    for name in CSV_COLUMNS[1:]:
        assert np.ptp(s[name]) < 1e-8, name


def test_event_continuity():
    # states are continuous; the step only changes derivatives
    s = preset_series("fig5")
    k = int(round(1.0/s.sample_period))
    jump = np.max(np.abs(s.states[k + 1] - s.states[k]))
    typical = np.max(np.abs(np.diff(s.states[k - 50:k + 50], axis=0)))
    assert jump <= typical
    assert np.all(np.isfinite(s.states))


def test_mixed_pair_oscillates_in_band():
    s = preset_series("fig5")
    f_dom, mag = fft_window(s, "p_diff", post_event_start(s)).dominant
    assert 10.0 <= f_dom <= 50.0
    assert mag > 1e-3


def test_determinism():
    sc = Scenario(t_end=1.2, events=(GridEvent(1.0, 1.6),))
    a, b = run_scenario(sc), run_scenario(sc)
    assert np.array_equal(a.table(), b.table())


def test_dt_robustness():
    base = preset_series("fig5").scenario
    coarse = np.max(np.abs(preset_series("fig5").p_diff))
    fine = np.max(np.abs(run_scenario(replace(base, dt=base.dt/2, log_decimation=20)).p_diff))
    assert abs(fine - coarse)/coarse < 0.01


def test_frequency_relocks():
    s = run_scenario(replace(preset_series("fig5").scenario, t_end=4.0))
    for ch in ("f1", "f2"):
        assert abs(s[ch][-1] - 50.0) < 1e-4


def test_settles_into_post_event_equilibrium():
    # slowest post-event mode is the VSM current integrator (about 1 s time constant)
    base = preset_series("fig5").scenario
    sc = replace(base, events=(GridEvent(0.5, 1.6),), t_end=7.0)
    post = solve_steady_state(sc.network_at(sc.t_end), sc.converters)
    s = run_scenario(sc)
    assert np.max(np.abs(s.states[-1] - post.x)) < 1e-6


def test_frequency_channel_definition():
    assert frequency_of(0.002) == pytest.approx(50.1)
    s = preset_series("fig5")
    dw = s.states[:, 7]
    assert np.allclose(s["f1"], frequency_of(dw), rtol=0, atol=1e-12)


def test_power_balance_holds_through_event():
    assert np.max(np.abs(power_balance(preset_series("fig5")))) < 1e-6


def literature_tunings():
    outer = OuterLoopParams(j=50.0*0.2, d_p=50.0, k_q=0.05)
    return (ConverterParams(ControlKind.VSM, outer,
                            VsmInnerParams(k_pv=0.5, k_iv=150.0, k_pc=1.0, k_ic=300.0)),
            ConverterParams(ControlKind.VADM, outer,
                            VadmInnerParams(l_v=0.2, r_v=0.05, k_p_c=0.7)))


def test_blowup_carries_time():
    sc = Scenario(converters=literature_tunings())
    with pytest.raises(NumericalBlowup) as info:
        run_scenario(sc)
    assert 0.0 < info.value.time < sc.t_end
    assert "last valid t" in str(info.value)


def test_csv_format(tmp_path):
    s = run_scenario(Scenario(t_end=0.05, events=()))
    path = tmp_path / "ts.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,p1,p2,q1,q2,f1,f2,v1,v2,vpcc,p_diff,f_diff"
    assert len(lines) == s.t.size + 1
    row = lines[10].split(",")
    assert len(row) == 12
    # 50.0000000xx style values must keep at least 9 significant digits
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(back, s.table(), rtol=1e-11, atol=1e-13)


def test_sample_grid_is_uniform():
    s = run_scenario(Scenario(t_end=0.1, events=(GridEvent(0.05, 1.6),)))
    assert s.sample_period == pytest.approx(2e-4)
    assert np.allclose(np.diff(s.t), 2e-4, rtol=0, atol=1e-15)
