"""Command-line front end: ``gfmosc {run,sweep,analyze,smallsignal}``."""
import argparse
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from gfmosc.analysis import (
    fft_window, post_event_start, proximity_sweep, scr_sweep, SweepVariable)
from gfmosc.errors import ConfigurationError, ContractError, GfmError
from gfmosc.scenario_file import PRESETS, parse_text, preset
from gfmosc.simulator import CSV_COLUMNS, run_scenario
from gfmosc.smallsignal import eigen_report, linearize, stability_scan

log = logging.getLogger("gfmosc")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class Outputs:
    """Atomic writer that removes everything it wrote if the command fails."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.written = []

    def write(self, name, writer):
        self.dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        os.close(fd)
        try:
            writer(tmp)
            os.replace(tmp, self.dir/name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(self.dir/name)
        return self.dir/name

    def text(self, name, content):
        return self.write(name, lambda p: Path(p).write_text(content))

    def rollback(self):
        for path in self.written:
            try:
                path.unlink()
            except FileNotFoundError:
                pass
        self.written = []


class CsvSeries:
    """A TimeSeries-shaped view of a CSV written by ``run`` (or any CSV with a ``t`` column)."""

    def __init__(self, path, scenario):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if "t" not in header:
            raise ContractError(f"{path}: CSV needs a 't' column")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        self.columns = {name: data[:, i] for i, name in enumerate(header)}
        self.t = self.columns["t"]
        self.scenario = scenario
        self.sample_period = float((self.t[-1] - self.t[0])/(self.t.size - 1))

    def __getitem__(self, name):
        if name in self.columns:
            return self.columns[name]
        if name == "p_diff":
            return self.columns["p1"] - self.columns["p2"]
        if name == "f_diff":
            return self.columns["f1"] - self.columns["f2"]
        raise ConfigurationError(f"channel '{name}' not in CSV")


def load_config(args):
    if args.scenario and args.preset:
        raise ConfigurationError("give either --scenario or --preset, not both")
    name = args.scenario or args.preset
    if name is None:
        raise ConfigurationError("a scenario is required (--scenario PATH or --preset NAME)")
    if args.preset or (name in PRESETS and not os.path.exists(name)):
        cfg = preset(name)
    else:
        cfg = parse_text(Path(name).read_text())
    if args.dt is not None:
        cfg = replace(cfg, values={**cfg.values, "sim.dt": float(args.dt)})
    return cfg


def _fmt_value(v):
    return ("%.12g" % v) if isinstance(v, float) else str(v)


def _manifest(out, cfg, command, started, extra=None):
    data = {
        "command": command,
        "scenario_hash": cfg.digest(),
        "resolved": cfg.emit().splitlines(),
        "outputs": [p.name for p in out.written],
        "wall_clock_s": round(time.perf_counter() - started, 6),
    }
    data.update(extra or {})
    out.text("manifest.json", json.dumps(data, indent=2) + "\n")


def cmd_run(args, cfg, out):
    series = run_scenario(cfg.validate())
    out.write("timeseries.csv", series.to_csv)


def _window_starts(series, cfg, cycles):
    starts = {}
    f_nom = series.scenario.network.base.f_nominal
    for w in cfg["analysis.windows"]:
        if w == "post":
            starts[w] = post_event_start(series)
        elif w == "pre":
            t_ev = post_event_start(series) - series.sample_period
            starts[w] = t_ev - cycles/f_nom
        else:
            starts[w] = float(w)
    return starts


def cmd_analyze(args, cfg, out):
    scenario = cfg.validate()
    series = CsvSeries(args.input, scenario) if args.input else run_scenario(scenario)
    if not args.input:
        out.write("timeseries.csv", series.to_csv)
    cycles = cfg["analysis.cycles"]
    f_nom = scenario.network.base.f_nominal
    summary = {}
    for w, start in _window_starts(series, cfg, cycles).items():
        for ch in cfg["analysis.channels"]:
            spec = fft_window(series, ch, start, cycles, f_nom)
            out.write(f"spectrum_{ch}_{w}.csv", spec.to_csv)
            f_dom, mag = spec.dominant
            summary[f"{ch}_{w}"] = {"start": spec.window_start, "dominant_hz": f_dom,
                                    "dominant_magnitude": mag}
    return {"spectra": summary}


def cmd_sweep(args, cfg, out):
    scenario = cfg.validate()
    var, values = cfg["sweep.variable"], cfg["sweep.values"]
    if var is None or not values:
        raise ConfigurationError("sweep needs sweep.variable and sweep.values")
    offsets = tuple(cfg["analysis.sweep_window"])
    if SweepVariable(var) is SweepVariable.GRID_SCR:
        res = scr_sweep(scenario, values, jobs=args.jobs, offsets=offsets,
                        pre_event_ratio=cfg["sweep.pre_event_ratio"],
                        severity_threshold=cfg["sweep.severity_threshold"])
    else:
        res = proximity_sweep(scenario, values, jobs=args.jobs, offsets=offsets)
    for i, pt in enumerate(res.points, start=1):
        out.write(f"point_{i:02d}_{_fmt_value(pt.value)}.csv", pt.series.to_csv)
    out.write("sweep.csv", res.to_csv)
    return {"severe": [pt.value for pt in res.points if pt.severe]}


def cmd_smallsignal(args, cfg, out):
    scenario = cfg.validate()
    rep = eigen_report(linearize(scenario, post_event=cfg["smallsignal.point"] == "post"))
    out.write("modes.csv", rep.to_csv)
    i = rep.least_damped()
    extra = {"least_damped": {"freq_hz": float(rep.frequencies[i]),
                              "damping": float(rep.damping_ratios[i])}}
    if cfg["sweep.variable"] == SweepVariable.GRID_SCR.value and cfg["sweep.values"]:
        scale = cfg["train.1.z_array_scale"]
        points = stability_scan(scenario, cfg["sweep.values"], [scale])
    elif cfg["sweep.variable"] == SweepVariable.Z_ARRAY_SCALE.value and cfg["sweep.values"]:
        scr = scenario.network_at(scenario.t_end).scr
        points = stability_scan(scenario, [scr], cfg["sweep.values"])
    else:
        points = None
    if points is not None:
        def write_scan(path):
            with open(path, "w") as fh:
                fh.write("scr,z_array_scale,min_damping,freq_hz,max_re,error\n")
                for p in points:
                    fh.write(",".join([_fmt_value(p.scr), _fmt_value(p.scale), _fmt_value(p.min_damping),
                                       _fmt_value(p.frequency), _fmt_value(p.max_real),
                                       json.dumps(p.error or "")]) + "\n")
        out.write("scan.csv", write_scan)
    return extra


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "analyze": cmd_analyze, "smallsignal": cmd_smallsignal}


def build_parser():
    parser = argparse.ArgumentParser(prog="gfmosc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="scenario file, or a preset name")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
        p.add_argument("--dt", type=float, help="override sim.dt (s)")
        if name == "analyze":
            p.add_argument("--input", help="analyze an existing time-series CSV instead of running")
    return parser


def _error(exc, code):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(args.out)
    started = time.perf_counter()
    try:
        cfg = load_config(args)
        extra = COMMANDS[args.command](args, cfg, out)
        _manifest(out, cfg, args.command, started, extra)
    except GfmError as exc:
        out.rollback()
        return _error(exc, exc.exit_code)
    except OSError as exc:
        out.rollback()
        return _error(exc, EXIT_IO)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
