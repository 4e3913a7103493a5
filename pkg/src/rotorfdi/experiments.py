"""Batch campaigns: detection/isolation statistics over a fault grid.

A sweep enumerates (trajectory, chip depth, IMU damping, rotor) cells and
evaluates every cell against a list of detection thresholds. Physics is
expensive and thresholds are cheap, so each cell flies once in pure
monitoring mode (threshold infinite, never pinning); that pin-free
residual stream is exact for any threshold up to its own detection
instant, because the flight only departs from the monitoring flight once
the machine pins a rotor. Replaying the monitoring rule over the stored
stream therefore gives every threshold's exact detection cycle.

Thresholds that never detect are recorded straight from the monitoring
flight. The rest are grouped by detection cycle (cycles within one
control cycle of the group's first share a group) and each group flies
once, live, at its smallest threshold: every member of the group detects
at that same cycle, pins the same stages, and collects the same stage
peaks, so the only per-member difference is the final verdict guard,
which is re-judged against each member's own threshold. A verdict also
requires the full stage schedule to fit the flight; truncated isolations
stay inconclusive.

Records land one JSON file per (cell, threshold) pair as soon as their
group finishes, so an interrupted sweep resumes by skipping keys whose
files already exist. Aggregation is a fold over records sorted by key
and is independent of execution order. Cell seeds are digests of the
cell coordinates: reproducible without a seed table.
"""

import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import math
import os
import time

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import ConfigError, FaultSpec, RunConfig, run_config_from_dict
from .control import Trajectory
from .fdi import stage_verdict
from .sensing import ImuModel


class SweepError(RuntimeError):
    """One or more grid cells failed for reasons other than divergence."""


def _default_thresholds():
    return tuple(round(0.0005 * k, 4) for k in range(1, 21))


@dataclasses.dataclass(frozen=True)
class SweepGrid:
    """Cartesian fault campaign: every axis combination is one record."""

    trajectories: tuple = ("line", "helicoid", "figure8", "square")
    depths: tuple = (0.0, 0.05, 0.10, 0.15, 0.20)
    dampings: tuple = (0.05, 0.03, 0.01)
    thresholds: tuple = dataclasses.field(default_factory=_default_thresholds)
    rotors: tuple = (1, 2, 3, 4, 5, 6, 7, 8)
    duration: float = 55.0    # [s]
    fault_onset: float = 10.0  # [s]
    merge_cycles: int = 1     # detection-cycle tolerance for sharing a run

    def __post_init__(self):
        for d in self.depths:
            if not 0.0 <= d < 1.0:
                raise ValueError("chip depths must lie in [0, 1)")
        for d in self.dampings:
            if not 0.0 < d <= 1.0:
                raise ValueError("dampings must lie in (0, 1]")
        for a, b in zip(self.thresholds, self.thresholds[1:]):
            if not a < b:
                raise ValueError("thresholds must increase strictly")
        for rho in self.thresholds:
            if rho <= 0.0:
                raise ValueError("thresholds must be positive")
        for r in self.rotors:
            if not 1 <= r <= 8:
                raise ValueError("rotor indices are 1-based, at most 8")
        if self.merge_cycles < 0:
            raise ValueError("merge_cycles must be non-negative")
        if self.fault_onset < 0.0 or self.duration < 0.0:
            raise ValueError("times must be non-negative")

    @property
    def n_records(self):
        return (len(self.trajectories) * len(self.depths)
                * len(self.dampings) * len(self.thresholds)
                * len(self.rotors))

    def cells(self):
        """All (trajectory, depth, damping, rotor) physics cells."""
        return [(tr, dp, dm, r)
                for tr in self.trajectories for dp in self.depths
                for dm in self.dampings for r in self.rotors]


def cell_seed(trajectory, depth, damping, rotor):
    """Stable 63-bit seed from the cell coordinates."""
    text = "%s|%.4f|%.4f|%d" % (trajectory, depth, damping, rotor)
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def cell_key(trajectory, depth, damping, rotor):
    return "%s_p%03d_d%02d_r%d" % (trajectory, round(depth * 100),
                                   round(damping * 100), rotor)


def record_key(trajectory, depth, damping, rotor, rho):
    return "%s_t%.4f" % (cell_key(trajectory, depth, damping, rotor), rho)


def cell_config(grid, trajectory, depth, damping, rotor):
    """RunConfig for one physics cell (threshold left at its default)."""
    fault = FaultSpec(rotor=rotor, depth=depth, onset=grid.fault_onset) \
        if depth > 0.0 else FaultSpec(rotor=0, depth=0.0,
                                      onset=grid.fault_onset)
    return RunConfig(trajectory=Trajectory(trajectory),
                     imu=ImuModel(damping=damping), fault=fault,
                     duration=grid.duration,
                     seed=cell_seed(trajectory, depth, damping, rotor))


@dataclasses.dataclass
class ExperimentRecord:
    """Outcome of one flight judged against one detection threshold."""

    key: str
    config: dict              # full RunConfig snapshot, rho_fd included
    fault: bool
    true_rotor: int           # 0 when healthy
    detected: bool
    detected_at: float        # s, nan when not detected
    verdict: int              # 1-based rotor, 0 = none
    stage_peaks: list         # empty until stages ran
    diverged: bool
    wall_time: float = 0.0    # s of physics this record cost (0 = replayed)

    def __post_init__(self):
        if self.verdict and not self.detected:
            raise ValueError("verdict requires a detection")

    @property
    def rho(self):
        return self.config["residual"]["rho_fd"]

    @property
    def depth(self):
        return self.config["fault"]["depth"] if self.fault else 0.0

    @property
    def damping(self):
        return self.config["imu"]["damping"]

    @property
    def correct(self):
        return self.fault and self.verdict == self.true_rotor

    def canonical(self):
        """Deterministic persisted form (wall time lives in the index)."""
        return {
            "key": self.key,
            "config": self.config,
            "fault": self.fault,
            "true_rotor": self.true_rotor,
            "detected": self.detected,
            "detected_at": None if math.isnan(self.detected_at)
            else self.detected_at,
            "verdict": self.verdict,
            "stage_peaks": list(self.stage_peaks),
            "diverged": self.diverged,
        }

    def to_json(self):
        return json.dumps(self.canonical(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        det = data["detected_at"]
        return cls(key=data["key"], config=data["config"],
                   fault=data["fault"], true_rotor=data["true_rotor"],
                   detected=data["detected"],
                   detected_at=math.nan if det is None else det,
                   verdict=data["verdict"],
                   stage_peaks=list(data["stage_peaks"]),
                   diverged=data["diverged"])


def replay_detection(r_fd, rho, window_samples, confirm_samples):
    """First sample where the monitoring rule fires for this threshold.

    Mirrors the in-flight machine: the residual must hold at or above
    ``rho`` for ``confirm_samples`` consecutive full-window samples.
    Returns None when the stream never sustains the level.
    """
    ok = np.asarray(r_fd) >= rho
    ok[:min(window_samples - 1, ok.size)] = False
    if ok.size < confirm_samples:
        return None
    runs = sliding_window_view(ok, confirm_samples).all(axis=1)
    hits = np.flatnonzero(runs)
    if hits.size == 0:
        return None
    return int(hits[0]) + confirm_samples - 1


def _snapshot(cfg, rho):
    out = cfg.to_dict()
    out["residual"]["rho_fd"] = rho
    return out


def _record_from_flight(key, cfg, rho, res, detected, detected_at,
                        stage_peaks, verdict, wall):
    return ExperimentRecord(
        key=key, config=_snapshot(cfg, rho), fault=cfg.fault.rotor > 0,
        true_rotor=cfg.fault.rotor, detected=detected,
        detected_at=detected_at, verdict=verdict,
        stage_peaks=stage_peaks, diverged=res.diverged, wall_time=wall)


def run_one(cfg, key="single"):
    """Fly one configuration live at its own threshold."""
    t0 = time.perf_counter()
    res = cfg.fly(rho_live=cfg.residual.rho_fd)
    wall = time.perf_counter() - t0
    peaks = list(res.stage_peaks) if res.detected else []
    return _record_from_flight(key, cfg, cfg.residual.rho_fd, res,
                               res.detected, res.detected_at, peaks,
                               res.verdict, wall)


def run_cell(grid, trajectory, depth, damping, rotor):
    """All of one cell's records: one monitoring flight plus group flights.

    Returns (records, n_flights, wall_seconds).
    """
    cfg = cell_config(grid, trajectory, depth, damping, rotor)
    win = cfg.residual.window_samples()
    dwell = cfg.residual.confirm_samples()
    stage_n = cfg.residual.stage_samples()
    n_rotors = cfg.vehicle.n_rotors
    n_cycles = int(round(grid.duration * cfg.residual.sample_rate))

    t0 = time.perf_counter()
    monitor = cfg.fly(rho_live=math.inf)
    n_flights = 1

    cycles = {rho: replay_detection(monitor.r_fd, rho, win, dwell)
              for rho in grid.thresholds}

    # group detecting thresholds; cycles near the group head share a flight
    groups = []
    for rho in sorted(r for r, c in cycles.items() if c is not None):
        c = cycles[rho]
        if groups and c - groups[-1][0] <= grid.merge_cycles:
            groups[-1][1].append(rho)
        else:
            groups.append((c, [rho]))

    records = []
    for rho in grid.thresholds:
        if cycles[rho] is not None:
            continue
        key = record_key(trajectory, depth, damping, rotor, rho)
        records.append(_record_from_flight(
            key, cfg, rho, monitor, False, math.nan, [], 0, 0.0))

    for cycle, rhos in groups:
        t_live = time.perf_counter()
        live = cfg.fly(rho_live=rhos[0])
        wall_live = time.perf_counter() - t_live
        n_flights += 1
        k_live = round(live.detected_at / (1.0 / cfg.residual.sample_rate)) \
            - 1 if live.detected else None
        if k_live is None or abs(k_live - cycle) > grid.merge_cycles:
            # replay missed: judge every member on its own live flight
            for rho in rhos:
                key = record_key(trajectory, depth, damping, rotor, rho)
                one = dataclasses.replace(cfg, residual=dataclasses.replace(
                    cfg.residual, rho_fd=rho))
                records.append(run_one(one, key=key))
                n_flights += 1
            continue
        completed = not live.diverged \
            and k_live + 1 + n_rotors * stage_n <= n_cycles
        peaks = list(live.stage_peaks)
        for i, rho in enumerate(rhos):
            key = record_key(trajectory, depth, damping, rotor, rho)
            verdict = stage_verdict(peaks, rho, cfg.residual.prominence) \
                if completed else 0
            records.append(_record_from_flight(
                key, cfg, rho, live, True, live.detected_at, peaks,
                verdict, wall_live if i == 0 else 0.0))

    records.sort(key=lambda r: r.key)
    return records, n_flights, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# record store

def record_path(out_dir, key):
    return os.path.join(out_dir, "records", key + ".json")


def store_records(out_dir, records):
    os.makedirs(os.path.join(out_dir, "records"), exist_ok=True)
    for rec in records:
        path = record_path(out_dir, rec.key)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(rec.to_json())
        os.replace(tmp, path)


def load_record(out_dir, key):
    with open(record_path(out_dir, key), "r", encoding="utf-8") as fh:
        return ExperimentRecord.from_dict(json.load(fh))


def cell_is_stored(out_dir, grid, cell):
    return all(os.path.exists(record_path(
        out_dir, record_key(*cell, rho))) for rho in grid.thresholds)


def write_index(out_dir, records, walls):
    """records/index.csv: one line per record, sorted by key."""
    path = os.path.join(out_dir, "records", "index.csv")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "fault", "true_rotor", "rho", "detected",
                    "detected_at_s", "verdict", "diverged", "wall_time_s"])
        for rec in sorted(records, key=lambda r: r.key):
            w.writerow([rec.key, int(rec.fault), rec.true_rotor,
                        "%.4f" % rec.rho, int(rec.detected),
                        "" if math.isnan(rec.detected_at)
                        else "%.3f" % rec.detected_at, rec.verdict,
                        int(rec.diverged),
                        "%.3f" % walls.get(rec.key, rec.wall_time)])


# ---------------------------------------------------------------------------
# aggregation

def _ratio(num, den):
    return None if den == 0 else num / den


def roc_points(records, thresholds):
    """ROC curves keyed by (depth, damping): one (fpr, tpr) per threshold.

    TPR counts correct isolations among faulty flights of that depth and
    damping; FPR counts any named rotor among fault-free flights of that
    damping. Slices with no faulty (or no fault-free) flights yield None
    for the undefined coordinate.
    """
    depths = sorted({r.depth for r in records})
    dampings = sorted({r.damping for r in records})
    tp = {}
    total = {}
    fp = {}
    clean = {}
    for r in records:
        if r.fault:
            key = (r.depth, r.damping, r.rho)
            total[key] = total.get(key, 0) + 1
            tp[key] = tp.get(key, 0) + r.correct
        else:
            key = (r.damping, r.rho)
            clean[key] = clean.get(key, 0) + 1
            fp[key] = fp.get(key, 0) + (r.verdict != 0)
    curves = {}
    for depth in depths:
        for damping in dampings:
            pts = [(_ratio(fp.get((damping, rho), 0),
                           clean.get((damping, rho), 0)),
                    _ratio(tp.get((depth, damping, rho), 0),
                           total.get((depth, damping, rho), 0)))
                   for rho in thresholds]
            curves[(depth, damping)] = pts
    return curves


@dataclasses.dataclass
class MetricsReport:
    """Sweep aggregate: ROC curves plus the fixed-threshold tables."""

    thresholds: tuple
    rho_star: float           # threshold the tables are evaluated at
    depths: tuple
    dampings: tuple
    n_rotors: int
    roc: dict                 # (depth, damping) -> [(fpr, tpr) per rho]
    confusion: dict           # damping -> (n_rotors, n_rotors+1) counts
    accuracy: dict            # (depth, damping) -> correct ratio or None
    fn_rates: dict            # damping -> missed-isolation ratio or None
    n_records: int
    n_flights: int = 0
    wall_time: float = 0.0

    def write(self, out_dir):
        """Emit the plot-ready artifact families (CSV + JSON summary)."""
        os.makedirs(out_dir, exist_ok=True)
        for damping in self.dampings:
            tag = "d%02d" % round(damping * 100)
            with open(os.path.join(out_dir, "roc_%s.csv" % tag), "w",
                      newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["depth", "rho", "fpr", "tpr"])
                for depth in self.depths:
                    if depth == 0.0:
                        continue
                    for rho, (fpr, tpr) in zip(
                            self.thresholds, self.roc[(depth, damping)]):
                        w.writerow(["%.2f" % depth, "%.4f" % rho,
                                    _fmt(fpr), _fmt(tpr)])
            with open(os.path.join(out_dir, "confusion_%s.csv" % tag), "w",
                      newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["true_rotor"]
                           + ["verdict_%d" % j
                              for j in range(1, self.n_rotors + 1)]
                           + ["none"])
                counts = self.confusion[damping]
                for i in range(self.n_rotors):
                    w.writerow([i + 1] + [int(c) for c in counts[i]])
        with open(os.path.join(out_dir, "accuracy.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["depth", "damping", "accuracy"])
            for depth in self.depths:
                if depth == 0.0:
                    continue
                for damping in self.dampings:
                    w.writerow(["%.2f" % depth, "%.2f" % damping,
                                _fmt(self.accuracy[(depth, damping)])])
        summary = {
            "rho_star": self.rho_star,
            "thresholds": list(self.thresholds),
            "depths": list(self.depths),
            "dampings": list(self.dampings),
            "n_records": self.n_records,
            "fn_rates": {"%.2f" % d: self.fn_rates[d]
                         for d in self.dampings},
            "accuracy": {"%.2f/%.2f" % (dp, dm):
                         self.accuracy[(dp, dm)]
                         for dp in self.depths if dp > 0.0
                         for dm in self.dampings},
        }
        with open(os.path.join(out_dir, "summary.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _fmt(value):
    return "" if value is None else "%.6f" % value


def aggregate(records, thresholds, rho_star=None, n_rotors=8):
    """Deterministic fold of a record list into a MetricsReport."""
    records = sorted(records, key=lambda r: r.key)
    depths = tuple(sorted({r.depth for r in records}))
    dampings = tuple(sorted({r.damping for r in records}))
    if rho_star is None:
        rho_star = min(thresholds, key=lambda t: abs(t - 0.008)) \
            if thresholds else 0.008
    roc = roc_points(records, thresholds)
    confusion = {dm: np.zeros((n_rotors, n_rotors + 1), dtype=int)
                 for dm in dampings}
    correct = {}
    total = {}
    for r in records:
        if not r.fault or r.rho != rho_star:
            continue
        key = (r.depth, r.damping)
        total[key] = total.get(key, 0) + 1
        correct[key] = correct.get(key, 0) + r.correct
        col = r.verdict - 1 if r.verdict else n_rotors
        confusion[r.damping][r.true_rotor - 1, col] += 1
    accuracy = {}
    fn_rates = {}
    for dm in dampings:
        missed = faulty = 0
        for dp in depths:
            if dp == 0.0:
                continue
            accuracy[(dp, dm)] = _ratio(correct.get((dp, dm), 0),
                                        total.get((dp, dm), 0))
            faulty += total.get((dp, dm), 0)
            missed += total.get((dp, dm), 0) - correct.get((dp, dm), 0)
        fn_rates[dm] = _ratio(missed, faulty)
    return MetricsReport(
        thresholds=tuple(thresholds), rho_star=rho_star, depths=depths,
        dampings=dampings, n_rotors=n_rotors, roc=roc, confusion=confusion,
        accuracy=accuracy, fn_rates=fn_rates, n_records=len(records))


# ---------------------------------------------------------------------------
# sweep driver

def _cell_job(args):
    grid, cell, out_dir = args
    records, n_flights, wall = run_cell(grid, *cell)
    store_records(out_dir, records)
    walls = {rec.key: rec.wall_time for rec in records}
    return cell, [rec.canonical() for rec in records], walls, n_flights, wall


def run_sweep(grid, out_dir, workers=1, resume=False, progress=None):
    """Execute (or finish) a sweep and fold its records into a report.

    Cells run as independent jobs, in processes when ``workers`` exceeds
    one. Each cell's records are persisted as soon as it finishes, so an
    interrupted sweep keeps its partial results; with ``resume`` those
    cells are loaded instead of recomputed. Raises SweepError when any
    cell fails outright (divergence is data, not a failure).
    """
    t0 = time.perf_counter()
    os.makedirs(os.path.join(out_dir, "records"), exist_ok=True)
    cells = grid.cells()
    todo = [c for c in cells
            if not (resume and cell_is_stored(out_dir, grid, c))]
    done = [c for c in cells if c not in todo]

    records = []
    walls = {}
    for cell in done:
        for rho in grid.thresholds:
            records.append(load_record(out_dir, record_key(*cell, rho)))
    n_flights = 0
    failures = []
    jobs = [(grid, cell, out_dir) for cell in todo]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            futures = {pool.submit(_cell_job, j): j[1] for j in jobs}
            for fut in concurrent.futures.as_completed(futures):
                cell = futures[fut]
                try:
                    _, recs, cell_walls, nf, wall = fut.result()
                except Exception as exc:  # worker crash, not divergence
                    failures.append((cell, repr(exc)))
                    continue
                records.extend(ExperimentRecord.from_dict(r) for r in recs)
                walls.update(cell_walls)
                n_flights += nf
                if progress is not None:
                    progress(cell, wall)
    else:
        for job in jobs:
            cell = job[1]
            try:
                _, recs, cell_walls, nf, wall = _cell_job(job)
            except Exception as exc:
                failures.append((cell, repr(exc)))
                continue
            records.extend(ExperimentRecord.from_dict(r) for r in recs)
            walls.update(cell_walls)
            n_flights += nf
            if progress is not None:
                progress(cell, wall)
    if failures:
        raise SweepError("; ".join("%s: %s" % (cell_key(*c), msg)
                                   for c, msg in sorted(failures)))

    write_index(out_dir, records, walls)
    report = aggregate(records, grid.thresholds)
    report.n_flights = n_flights
    report.wall_time = time.perf_counter() - t0
    report.write(out_dir)
    return report


# ---------------------------------------------------------------------------
# grid files

_GRID_SCALARS = {"duration": float, "fault_onset": float,
                 "merge_cycles": int}
_GRID_LISTS = {"trajectories": str, "depths": float, "dampings": float,
               "thresholds": float, "rotors": int}


def sweep_grid_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    kwargs = {}
    for key, value in data.items():
        if key in _GRID_LISTS:
            if not isinstance(value, list):
                raise ConfigError("%s: expected a list" % key)
            want = _GRID_LISTS[key]
            out = []
            for i, v in enumerate(value):
                if want is str and not isinstance(v, str):
                    raise ConfigError("%s[%d]: expected a string" % (key, i))
                if want is not str and (isinstance(v, bool)
                                        or not isinstance(v, (int, float))):
                    raise ConfigError("%s[%d]: expected a number" % (key, i))
                out.append(want(v))
            kwargs[key] = tuple(out)
        elif key in _GRID_SCALARS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError("%s: expected a number" % key)
            kwargs[key] = _GRID_SCALARS[key](value)
        else:
            raise ConfigError("unknown key '%s'" % key)
    try:
        return SweepGrid(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_sweep_grid(path):
    """Read a JSON sweep grid; empty or blank files mean the stock grid."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read %s: %s" % (path, exc)) from exc
    if not text.strip():
        return SweepGrid()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("%s: line %d column %d: %s"
                          % (path, exc.lineno, exc.colno, exc.msg)) from exc
    return sweep_grid_from_dict(data)
