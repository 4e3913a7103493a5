"""Command-line front end: single flights and batch sweeps.

``rotorfdi simulate`` flies one configured scenario and writes the
plot-ready run log: a cycle-resolved time-series CSV (pose, rotor
speeds, duty cycles, measured accelerations, both residuals and the pin
marker), a per-window spectra CSV for both analysis bands, and a JSON
verdict summary. ``rotorfdi sweep`` drives the fault campaign and writes
the ROC, confusion and accuracy artifact families.

Exit codes: 0 success, 2 configuration error, 3 the single flight
diverged (its partial log is still written), 4 a sweep cell failed
outright (finished cells are kept and a rerun with ``--resume`` skips
them). The default output root comes from ``ROTORFDI_OUT`` when set.
"""

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_run_config
from .experiments import (SweepError, SweepGrid, load_sweep_grid,
                          replay_detection, run_sweep)
from .fdi import goertzel_magnitude

ENV_OUT = "ROTORFDI_OUT"


def _default_out():
    return os.environ.get(ENV_OUT, "rotorfdi_out")


def _parse_thresholds(text):
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError("--replay-thresholds: expected comma-separated "
                          "numbers, got %r" % text)
    if not values:
        raise ConfigError("--replay-thresholds: empty list")
    for a, b in zip(values, values[1:]):
        if not a < b:
            raise ConfigError("--replay-thresholds must increase strictly")
    if values[0] <= 0.0:
        raise ConfigError("--replay-thresholds must be positive")
    return values


def _write_timeseries(path, cfg, res):
    n = cfg.vehicle.n_rotors
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z", "x_ref", "y_ref", "z_ref"]
                   + ["thetadot_%d" % i for i in range(1, n + 1)]
                   + ["pwm_%d" % i for i in range(1, n + 1)]
                   + ["acc_x", "acc_y", "acc_z", "r_fd", "r_fdi", "pin"])
        duty = res.u / cfg.vehicle.u_max  # raw ratio: logs may hold a
        # diverged flight's junk that pwm() would rightly reject
        for k in range(res.t.size):
            w.writerow(["%.3f" % res.t[k]]
                       + ["%.6f" % v for v in res.p[k]]
                       + ["%.6f" % v for v in res.p_ref[k]]
                       + ["%.4f" % v for v in res.thetadot[k]]
                       + ["%.6f" % v for v in duty[k]]
                       + ["%.6f" % v for v in res.accel_meas[k]]
                       + ["%.8f" % res.r_fd[k], "%.8f" % res.r_fdi[k],
                          "%d" % res.pin[k]])


def _write_spectra(path, cfg, res):
    """One spectrum per full window per band, tidy rows."""
    r = cfg.residual
    win = r.window_samples()
    fs = r.sample_rate
    g = cfg.vehicle.g
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t_end", "band", "omega", "mag_x", "mag_y"])
        for end in range(win, res.t.size + 1, win):
            sl = slice(end - win, end)
            ax = res.accel_meas[sl, 0] / g
            ay = res.accel_meas[sl, 1] / g
            t_end = end / fs
            for band, grid in (("fd", r.fd_grid()), ("fdi", r.fdi_grid())):
                for omega in grid:
                    w.writerow(["%.3f" % t_end, band, "%.1f" % omega,
                                "%.8f" % goertzel_magnitude(ax, omega, fs),
                                "%.8f" % goertzel_magnitude(ay, omega, fs)])


def _verdict_payload(cfg, res, replay):
    n = cfg.vehicle.n_rotors
    out = {
        "rho_fd": cfg.residual.rho_fd,
        "seed": cfg.seed,
        "duration": cfg.duration,
        "fault_rotor": cfg.fault.rotor,
        "detected": res is not None and res.detected,
        "detected_at": None,
        "verdict": 0 if res is None else res.verdict,
        "stage_peaks": [] if res is None else list(res.stage_peaks),
        "isolation_interval": None,
        "diverged": res is not None and res.diverged,
    }
    if res is not None and res.detected:
        out["detected_at"] = res.detected_at
        out["isolation_interval"] = [
            res.detected_at,
            res.detected_at + n * cfg.residual.stage_time]
    if replay and res is not None:
        win = cfg.residual.window_samples()
        dwell = cfg.residual.confirm_samples()
        rows = []
        for rho in replay:
            k = replay_detection(res.r_fd, rho, win, dwell)
            rows.append({"rho": rho, "detected": k is not None,
                         "detected_at": None if k is None
                         else (k + 1) / cfg.residual.sample_rate})
        out["replayed"] = rows
    return out


def cmd_simulate(config_path, out_dir, seed=None, duration=None,
                 replay=None):
    """Run one flight and write its log; returns the process exit code."""
    cfg = load_run_config(config_path) if config_path else RunConfig()
    try:
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        if duration is not None:
            cfg = dataclasses.replace(cfg, duration=duration)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = out_dir or cfg.out_dir or _default_out()
    os.makedirs(out_dir, exist_ok=True)

    n_cycles = int(round(cfg.duration * cfg.residual.sample_rate))
    res = cfg.fly() if n_cycles >= 1 else None

    _write_timeseries(os.path.join(out_dir, "timeseries.csv"), cfg,
                      res if res is not None else _EmptyLog())
    _write_spectra(os.path.join(out_dir, "spectra.csv"), cfg,
                   res if res is not None else _EmptyLog())
    payload = _verdict_payload(cfg, res, replay)
    with open(os.path.join(out_dir, "verdict.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")

    if res is not None and res.diverged:
        print("diverged at t=%.3f s; partial log in %s"
              % (res.diverged_at, out_dir), file=sys.stderr)
        return 3
    if payload["detected"] and payload["verdict"]:
        print("detected at %.3f s, verdict rotor %d"
              % (payload["detected_at"], payload["verdict"]))
    elif payload["detected"]:
        print("detected at %.3f s, no verdict" % payload["detected_at"])
    else:
        print("no detection")
    return 0


class _EmptyLog:
    """Stand-in for a zero-duration flight: every trace is empty."""

    def __init__(self):
        self.t = np.zeros(0)
        self.p = np.zeros((0, 3))
        self.p_ref = np.zeros((0, 3))
        self.u = np.zeros((0, 8))
        self.thetadot = np.zeros((0, 8))
        self.accel_meas = np.zeros((0, 3))
        self.r_fd = np.zeros(0)
        self.r_fdi = np.zeros(0)
        self.pin = np.zeros(0, dtype=int)


def cmd_sweep(grid_path, out_dir, workers, resume, replay=None):
    """Run (or finish) a sweep; returns the process exit code."""
    grid = load_sweep_grid(grid_path) if grid_path else SweepGrid()
    if replay:
        try:
            grid = dataclasses.replace(grid, thresholds=replay)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    out_dir = out_dir or _default_out()

    done = [0]

    def progress(cell, wall):
        done[0] += 1
        print("[%d] %s %.1f s" % (done[0], "_".join(str(c) for c in cell),
                                  wall), file=sys.stderr)

    report = run_sweep(grid, out_dir, workers=workers, resume=resume,
                       progress=progress)
    print("records %d  flights %d  wall %.1f s"
          % (report.n_records, report.n_flights, report.wall_time))
    for damping in report.dampings:
        rate = report.fn_rates[damping]
        print("  d=%.2f: missed %s at rho=%.4f"
              % (damping, "n/a" if rate is None else "%.1f%%" % (100 * rate),
                 report.rho_star))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rotorfdi",
        description="Octarotor blade-chipping simulation and FDI campaigns")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="fly one configured scenario")
    sim.add_argument("--config", help="JSON run configuration (empty file "
                                      "or omitted: stock chipping demo)")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--duration", type=float,
                     help="override the flight length [s]")
    sim.add_argument("--out", help="output directory (default: $%s or "
                                   "./rotorfdi_out)" % ENV_OUT)
    sim.add_argument("--replay-thresholds",
                     help="comma-separated detection thresholds to replay "
                          "against the recorded residual")

    sw = sub.add_parser("sweep", help="run the fault campaign")
    sw.add_argument("--config", help="JSON sweep grid (omitted: stock grid)")
    sw.add_argument("--out", help="output directory (default: $%s or "
                                  "./rotorfdi_out)" % ENV_OUT)
    sw.add_argument("--workers", type=int,
                    default=min(8, os.cpu_count() or 1),
                    help="parallel cell jobs (default: min(8, cpus))")
    sw.add_argument("--resume", action="store_true",
                    help="skip cells whose records already exist")
    sw.add_argument("--replay-thresholds",
                    help="comma-separated thresholds overriding the grid's")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        replay = _parse_thresholds(args.replay_thresholds) \
            if args.replay_thresholds is not None else None
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, seed=args.seed,
                                duration=args.duration, replay=replay)
        return cmd_sweep(args.config, args.out, workers=args.workers,
                         resume=args.resume, replay=replay)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except SweepError as exc:
        print("sweep failed: %s" % exc, file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
