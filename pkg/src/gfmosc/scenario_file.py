"""
Line-oriented scenario files and the built-in study presets.

A file is a list of ``section.key = value`` lines; ``#`` starts a comment.
Sections::

    grid.scr, grid.x_over_r, grid.v_inf
    train.<k>.<key>          k = 1, 2; control = vsm | vsm0h | vadm
    sim.t_end, sim.dt, sim.log_decimation, sim.measurement_filter (off or rad/s)
    event.<n>.time, event.<n>.scr, event.<n>.x_over_r
    analysis.windows, analysis.channels, analysis.cycles, analysis.sweep_window
    sweep.variable, sweep.values, sweep.pre_event_ratio, sweep.severity_threshold
    smallsignal.point

Every key missing from a file takes its value from ``DEFAULTS``, which is
the single table of default values used by the command-line front end.
"""
import hashlib
import re
from dataclasses import dataclass, fields

from gfmosc.analysis import (
    SCR_PRE_EVENT_RATIO, SEVERITY_THRESHOLD, SWEEP_WINDOW, SweepVariable)
from gfmosc.controls import (
    ControlKind, ConverterParams, OuterLoopParams, VadmInnerParams, VsmInnerParams)
from gfmosc.errors import ConfigurationError, GfmError, ScenarioError
from gfmosc.network import GRID_X_OVER_R, GridEvent, NetworkParams, TrainParams, nominal_grid_impedance
from gfmosc.simulator import Scenario
from gfmosc.units import Impedance

_OUTER = {f.name: f.default for f in fields(OuterLoopParams)}
_VSM = {f.name: f.default for f in fields(VsmInnerParams) if f.name not in ("c_f", "l_f")}
_VADM = {f.name: f.default for f in fields(VadmInnerParams) if f.name != "l_f"}
_TRAIN = TrainParams()

TRAIN_DEFAULTS = {
    "control": "vsm",
    **_OUTER,
    **_VSM,
    **_VADM,
    "l_f": _TRAIN.l_f,
    "c_f": _TRAIN.c_f,
    "r_f": _TRAIN.r_f,
    "z_array_scale": 0.2,
    "z_tf": (_TRAIN.z_tf.r, _TRAIN.z_tf.x),
    "connected": True,
}

DEFAULTS = {
    "grid.scr": 3.2,
    "grid.x_over_r": GRID_X_OVER_R,
    "grid.v_inf": 1.0,
    **{f"train.{k}.{key}": v for k in (1, 2) for key, v in TRAIN_DEFAULTS.items()},
    "train.2.control": "vadm",
    "sim.t_end": 2.0,
    "sim.dt": 20e-6,
    "sim.log_decimation": 10,
    "sim.measurement_filter": None,
    "analysis.windows": ("post", "pre"),
    "analysis.channels": ("p_diff", "f_diff"),
    "analysis.cycles": 2,
    "analysis.sweep_window": SWEEP_WINDOW,
    "sweep.variable": None,
    "sweep.values": (),
    "sweep.pre_event_ratio": SCR_PRE_EVENT_RATIO,
    "sweep.severity_threshold": SEVERITY_THRESHOLD,
    "smallsignal.point": "post",
}
EVENT_DEFAULTS = {"time": 1.0, "scr": 1.6, "x_over_r": GRID_X_OVER_R}

_FLOAT_TUPLES = {"z_tf": 2, "analysis.sweep_window": 2}
_STRING_TUPLES = ("analysis.windows", "analysis.channels")
_CHANNELS = ("p1", "p2", "q1", "q2", "f1", "f2", "v1", "v2", "vpcc", "p_diff", "f_diff")
_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*$")


def _generic(key):
    """Default-table key for ``key`` (event entries share one template)."""
    m = re.fullmatch(r"event\.(\d+)\.(\w+)", key)
    if m:
        return "event", m.group(2)
    return key, None


def _convert(key, raw, line):
    if key.startswith("event."):
        _, field_ = _generic(key)
        if field_ not in EVENT_DEFAULTS:
            raise ScenarioError("unknown key", key=key, line=line)
        return _number(key, raw, line)
    if key not in DEFAULTS:
        raise ScenarioError("unknown key", key=key, line=line)
    short = key.rsplit(".", 1)[-1]
    default = DEFAULTS[key]
    text = raw.strip()
    if short == "control":
        if text not in {c.value for c in ControlKind}:
            raise ScenarioError(f"control must be vsm, vsm0h or vadm, got '{text}'", key=key, line=line)
        return text
    if short == "connected":
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ScenarioError(f"expected a boolean, got '{text}'", key=key, line=line)
        return text.lower() in ("true", "1", "yes")
    if key == "sim.measurement_filter":
        return None if text.lower() in ("off", "none", "") else _number(key, text, line)
    if key == "sweep.variable":
        if text.lower() in ("none", ""):
            return None
        try:
            return SweepVariable(text).value
        except ValueError:
            raise ScenarioError(f"sweep.variable must be grid_scr or z_array_scale, got '{text}'",
                                key=key, line=line) from None
    if key == "smallsignal.point":
        if text not in ("pre", "post"):
            raise ScenarioError(f"expected pre or post, got '{text}'", key=key, line=line)
        return text
    if key in _STRING_TUPLES:
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if key == "sweep.values":
        return tuple(_number(key, s, line) for s in text.split(",") if s.strip())
    size = _FLOAT_TUPLES.get(short, _FLOAT_TUPLES.get(key))
    if size:
        vals = tuple(_number(key, s, line) for s in text.split(","))
        if len(vals) != size:
            raise ScenarioError(f"expected {size} comma-separated numbers", key=key, line=line)
        return vals
    if isinstance(default, int) and not isinstance(default, bool):
        value = _number(key, text, line)
        if value != int(value):
            raise ScenarioError(f"expected an integer, got '{text}'", key=key, line=line)
        return int(value)
    return _number(key, text, line)


def _number(key, text, line):
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(f"expected a number, got '{text}'", key=key, line=line) from None


def parse_text(text):
    """Parse scenario-file text into a resolved key/value map (defaults applied)."""
    values = dict(DEFAULTS)
    lines = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        m = _LINE.match(body)
        if not m:
            raise ScenarioError("syntax error, expected 'section.key = value'", line=n)
        key, val = m.group(1), m.group(2)
        if key in lines:
            raise ScenarioError(f"duplicate key (first set on line {lines[key]})", key=key, line=n)
        m_train = re.fullmatch(r"train\.(\d+)\.\w+", key)
        if m_train and m_train.group(1) not in ("1", "2"):
            raise ScenarioError("the plant has exactly two trains (train.1, train.2)", key=key, line=n)
        values[key] = _convert(key, val, n)
        lines[key] = n
    for k in (1, 2):
        # the inertia-free variant defaults to j = 0
        if values[f"train.{k}.control"] == "vsm0h" and f"train.{k}.j" not in lines:
            values[f"train.{k}.j"] = 0.0
    events = {}
    for key in [k for k in values if k.startswith("event.")]:
        idx, field_ = key.split(".")[1:]
        events.setdefault(int(idx), dict(EVENT_DEFAULTS))[field_] = values.pop(key)
    values["events"] = tuple(tuple(sorted(ev.items())) for _, ev in sorted(events.items()))
    return ScenarioConfig(values, lines)


def _event_dicts(values):
    return [dict(ev) for ev in values["events"]]


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved scenario-file values plus the line each explicit key came from."""
    values: dict
    lines: dict

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.values == other.values

    def __getitem__(self, key):
        return self.values[key]

    def _fail(self, key, exc):
        raise ScenarioError(str(exc), key=key, line=self.lines.get(key)) from exc

    def _train(self, k):
        v = {key: self.values[f"train.{k}.{key}"] for key in TRAIN_DEFAULTS}
        pre = f"train.{k}."
        try:
            z_tf = Impedance(*v["z_tf"])
        except GfmError as exc:
            self._fail(pre + "z_tf", exc)
        for key in ("l_f", "c_f", "r_f", "z_array_scale"):
            if v[key] < 0 or (key != "r_f" and v[key] == 0):
                self._fail(pre + key, ConfigurationError(f"{key} must be positive, got {v[key]}"))
        train = TrainParams(z_tf=z_tf, z_array=nominal_grid_impedance().scaled(v["z_array_scale"]),
                            l_f=v["l_f"], c_f=v["c_f"], r_f=v["r_f"], connected=v["connected"])
        kind = ControlKind(v["control"])
        outer_kw = {key: v[key] for key in _OUTER}
        key = None
        try:
            for key in _OUTER:
                OuterLoopParams(**{key: outer_kw[key]})
            outer = OuterLoopParams(**outer_kw)
            key = None
            if kind is ControlKind.VADM:
                for key in _VADM:
                    VadmInnerParams(**{key: v[key]})
                inner = VadmInnerParams(l_f=v["l_f"], **{n: v[n] for n in _VADM})
            else:
                for key in _VSM:
                    VsmInnerParams(**{key: v[key]})
                inner = VsmInnerParams(c_f=v["c_f"], l_f=v["l_f"], **{n: v[n] for n in _VSM})
            key = None
            conv = ConverterParams(kind, outer, inner)
        except GfmError as exc:
            self._fail(pre + (key or "control"), exc)
        return train, conv

    def scenario(self):
        """Build the simulator Scenario."""
        v = self.values
        for key in ("grid.scr", "grid.x_over_r", "grid.v_inf", "sim.t_end", "sim.dt"):
            if not v[key] > 0:
                self._fail(key, ConfigurationError(f"{key} must be positive, got {v[key]}"))
        if v["sim.log_decimation"] < 1:
            self._fail("sim.log_decimation", ConfigurationError("log_decimation must be >= 1"))
        (t1, c1), (t2, c2) = self._train(1), self._train(2)
        try:
            net = NetworkParams.from_scr(v["grid.scr"], v["grid.x_over_r"], trains=(t1, t2),
                                         v_inf=v["grid.v_inf"])
        except GfmError as exc:
            self._fail("grid.scr", exc)
        events = []
        for n, ev in enumerate(_event_dicts(v), start=1):
            for name in ("scr", "x_over_r"):
                if not ev[name] > 0:
                    self._fail(f"event.{n}.{name}", ConfigurationError(f"event {name} must be positive"))
            if not 0 < ev["time"] < v["sim.t_end"]:
                self._fail(f"event.{n}.time", ConfigurationError(
                    f"event time {ev['time']} must lie inside (0, sim.t_end={v['sim.t_end']})"))
            events.append(GridEvent(ev["time"], ev["scr"], ev["x_over_r"]))
        try:
            return Scenario(network=net, converters=(c1, c2), events=tuple(events),
                            t_end=v["sim.t_end"], dt=v["sim.dt"],
                            log_decimation=v["sim.log_decimation"],
                            measurement_filter_cutoff=v["sim.measurement_filter"])
        except GfmError as exc:
            self._fail("sim.measurement_filter" if "filter" in str(exc) else "sim.dt", exc)

    def validate(self):
        """Check every section, including the ones only some commands use."""
        sc = self.scenario()
        v = self.values
        for ch in v["analysis.channels"]:
            if ch not in _CHANNELS:
                self._fail("analysis.channels", ConfigurationError(f"unknown channel '{ch}'"))
        for w in v["analysis.windows"]:
            if w not in ("pre", "post"):
                try:
                    float(w)
                except ValueError:
                    self._fail("analysis.windows", ConfigurationError(
                        f"window must be pre, post or a start time, got '{w}'"))
        if v["analysis.cycles"] < 1:
            self._fail("analysis.cycles", ConfigurationError("cycles must be >= 1"))
        a, b = v["analysis.sweep_window"]
        if not 0 <= a < b:
            self._fail("analysis.sweep_window", ConfigurationError("need 0 <= start < end"))
        if any(not x > 0 for x in v["sweep.values"]):
            self._fail("sweep.values", ConfigurationError("sweep values must be positive"))
        if not v["sweep.pre_event_ratio"] > 0:
            self._fail("sweep.pre_event_ratio", ConfigurationError("pre_event_ratio must be positive"))
        return sc

    def emit(self):
        """Serialize every resolved value, one ``key = value`` line each."""
        out = []
        for key, val in self.values.items():
            if key == "events":
                for n, ev in enumerate(_event_dicts(self.values), start=1):
                    for name, x in ev.items():
                        out.append(f"event.{n}.{name} = {_fmt(x)}")
                continue
            out.append(f"{key} = {_fmt(val)}")
        return "\n".join(out) + "\n"

    def digest(self):
        return hashlib.sha256(self.emit().encode()).hexdigest()


def _fmt(val):
    if val is None:
        return "none"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, (tuple, list)):
        return ",".join(_fmt(x) for x in val)
    return str(val)


def parse_scenario(text):
    """Parse scenario-file text straight to a validated Scenario."""
    return parse_text(text).validate()


_EVENT = "event.1.time = 1.0\nevent.1.scr = 1.6\n"

PRESETS = {
    "fig3a": "train.1.control = vsm\ntrain.2.control = vsm\ngrid.scr = 3.2\n" + _EVENT,
    "fig3b": "train.1.control = vadm\ntrain.2.control = vadm\ngrid.scr = 3.2\n" + _EVENT,
    "fig4": "train.1.control = vsm0h\ntrain.2.control = vsm\ngrid.scr = 3.2\n" + _EVENT,
    "fig5": ("train.1.control = vsm\ntrain.2.control = vadm\ngrid.scr = 3.2\n" + _EVENT
             + "analysis.channels = p_diff\nanalysis.windows = post,pre\n"),
    "fig6": ("train.1.control = vsm\ntrain.2.control = vadm\ngrid.scr = 3.2\n" + _EVENT
             + "analysis.channels = f_diff\nanalysis.windows = post,pre\n"),
    "fig7": ("train.1.control = vsm\ntrain.2.control = vadm\ngrid.scr = 3.2\n" + _EVENT
             + "sweep.variable = z_array_scale\nsweep.values = 0.05,0.1,0.14925373134328357,0.2\n"),
    "fig8": ("train.1.control = vsm\ntrain.2.control = vadm\ngrid.scr = 3.2\n" + _EVENT
             + "sweep.variable = grid_scr\nsweep.values = 1.6,3.2,4.8,6.4,8\n"),
}


def preset(name):
    try:
        return parse_text(PRESETS[name])
    except KeyError:
        raise ConfigurationError(
            f"unknown preset '{name}' (available: {', '.join(sorted(PRESETS))})") from None
