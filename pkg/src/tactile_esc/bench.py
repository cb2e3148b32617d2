"""Closed-loop insertion trials and the two experiment campaigns.

A trial closes the loop ESC -> plant -> strain (direct or rendered and
tracked) -> objective -> ESC on a simulated clock advancing 1/feedback_rate
per tick. Campaign cells are keyed by (lock, axis, bin): single-axis sweeps
are keyed by the offset value, random campaigns by marginal bins.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .esc import CHANNELS, EscConfig, ExtremumSeekingController, Pose6
from .lock_sim import (ARCHETYPES, DEG, MM, GelRenderConfig, GelRenderer, LockModel,
                       initial_state, plant_step, preset)
from .objective import ObjectiveConfig, check_success, insertion_loss, total_loss
from .tracker import StrainTracker, TrackingLost, apply_deadband

DEFAULT_FEEDBACK_HZ = 13.0
DEFAULT_TIME_LIMIT = 1800.0
WEDGE_PATIENCE = 60.0
FAILURE_CLASSES = ("none", "timeout", "wedged", "strain-limit", "tracking-lost")
STRAIN_SOURCES = ("direct-plant", "rendered-frames")
# template subsampling for the tracker in the loop; full-resolution accuracy is
# tested separately and stride 2 keeps 40-trial paired runs tractable
RENDERED_TRACKER_STRIDE = 2

# perturbed axes: (name, pose field, unit scale to SI, unit label)
AXES = {
    "tx": ("x", MM, "mm"),
    "tz": ("z", MM, "mm"),
    "rx": ("alpha", DEG, "deg"),
    "ry": ("beta", DEG, "deg"),
    "rz": ("gamma", DEG, "deg"),
}
SWEEP_OFFSETS = {
    "tx": (-2.5, -1.9, 1.9, 2.5),
    "tz": (-2.5, -1.9, 1.9, 2.5),
    "rx": (-10.0, -5.0, 5.0, 10.0),
    "ry": (-10.0, -5.0, 5.0, 10.0),
    "rz": (-10.0, -5.0, 5.0, 10.0),
}
TRANSLATION_RANGE_MM = 2.5
ROTATION_RANGE_DEG = 10.0
RANDOM_BINS = {
    "mm": (-2.5, -1.9, 0.0, 1.9, 2.5),
    "deg": (-10.0, -5.0, 0.0, 5.0, 10.0),
}

TRACE_COLUMNS = (
    ("t",)
    + tuple(f"theta_{c}" for c in CHANNELS)
    + tuple(f"theta_hat_{c}" for c in CHANNELS)
    + tuple(f"achieved_{c}" for c in CHANNELS)
    + ("L_insertion", "L_strain", "L", "raw_strain", "inserted_depth", "wedged")
)


@dataclass(frozen=True)
class TrialSpec:
    lock: LockModel
    initial_offset: Pose6 = field(default_factory=Pose6)
    time_limit: float = DEFAULT_TIME_LIMIT
    feedback_rate: float = DEFAULT_FEEDBACK_HZ
    strain_source: str = "direct-plant"
    rng_seed: int = 0
    esc_config: EscConfig | None = None
    objective: ObjectiveConfig | None = None
    render: GelRenderConfig | None = None

    def __post_init__(self):
        if not 10.0 <= self.feedback_rate <= 16.0:
            raise ValueError(f"feedback_rate must lie in [10, 16] Hz, got {self.feedback_rate}")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be > 0")
        if self.strain_source not in STRAIN_SOURCES:
            raise ValueError(f"strain_source must be one of {STRAIN_SOURCES}")


@dataclass
class TrialRecord:
    spec: TrialSpec
    success: bool
    insertion_time: float | None
    failure_class: str
    trace: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.trace[:, TRACE_COLUMNS.index(name)]

    def same_as(self, other: "TrialRecord") -> bool:
        return (self.success == other.success and self.insertion_time == other.insertion_time
                and self.failure_class == other.failure_class
                and np.array_equal(self.trace, other.trace))


def aligned_pose(lock: LockModel) -> Pose6:
    return Pose6(lock.keyhole_center[0], 0.0, lock.keyhole_center[1])


def run_trial(spec: TrialSpec) -> TrialRecord:
    lock = spec.lock
    dt = 1.0 / spec.feedback_rate
    rng = np.random.default_rng(spec.rng_seed)
    theta0 = (aligned_pose(lock) + spec.initial_offset).to_array()
    state = initial_state(lock, theta0)
    base = spec.objective or ObjectiveConfig(depth_d=lock.depth_d)
    obj = base.with_y0(float(state.achieved_pose[1]))
    esc = ExtremumSeekingController(config=spec.esc_config).reset(theta0)

    tracker = renderer = None
    if spec.strain_source == "rendered-frames":
        renderer = GelRenderer(spec.render or GelRenderConfig(texture_seed=spec.rng_seed))
        tracker = StrainTracker(stride=RENDERED_TRACKER_STRIDE).fit(renderer.render(None))

    rows = []
    theta = esc.modulate()
    t = 0.0
    success, failure, insertion_time = False, "timeout", None
    wedge_since, wedge_depth = None, 0.0
    while True:
        state = plant_step(lock, state, theta, dt, rng)
        raw = state.contact_strain
        if tracker is not None:
            try:
                tracker.track(renderer.render(state))
            except TrackingLost:
                failure = "tracking-lost"
                break
            strain = tracker.strain()
        else:
            strain = apply_deadband(raw)
        l_ins = insertion_loss(float(state.achieved_pose[1]), obj)
        loss = total_loss(l_ins, strain, obj)
        rows.append((t, *theta, *esc.theta_hat_, *state.achieved_pose, l_ins, strain, loss,
                     raw, state.inserted_depth, float(state.wedged)))
        if check_success(l_ins, obj):
            success, failure, insertion_time = True, "none", t
            break
        if strain > obj.strain_abort:
            failure = "strain-limit"
            break
        if state.wedged:
            if wedge_since is None or state.inserted_depth > wedge_depth:
                wedge_since, wedge_depth = t, state.inserted_depth
            elif t - wedge_since >= WEDGE_PATIENCE:
                failure = "wedged"
                break
        else:
            wedge_since = None
        if t + dt > spec.time_limit:
            break
        theta = esc.step(loss, dt)
        t = esc.t_
    return TrialRecord(spec, success, insertion_time, failure, np.array(rows, dtype=float))


@dataclass
class Cell:
    lock: str
    axis: str
    bin: str
    n: int = 0
    successes: int = 0
    times: list = field(default_factory=list)

    @property
    def rate(self) -> int:
        return int(round(100.0 * self.successes / self.n)) if self.n else 0

    @property
    def mean_time(self) -> int | None:
        return int(round(sum(self.times) / len(self.times))) if self.times else None

    def add(self, record: TrialRecord):
        self.n += 1
        if record.success:
            self.successes += 1
            self.times.append(record.insertion_time)

    def row(self) -> tuple:
        return (self.lock, self.axis, self.bin, self.n, self.successes, self.rate, self.mean_time)


@dataclass
class CampaignReport:
    kind: str
    cells: list[Cell] = field(default_factory=list)
    trials: list[TrialRecord] = field(default_factory=list)

    def cell(self, lock: str, axis: str, bin_label: str) -> Cell:
        for c in self.cells:
            if (c.lock, c.axis, c.bin) == (lock, axis, bin_label):
                return c
        c = Cell(lock, axis, bin_label)
        self.cells.append(c)
        return c

    def rows(self) -> list[tuple]:
        return [c.row() for c in self.cells]

    def success_rate(self, lock: str | None = None) -> float:
        trials = [r for r in self.trials if lock is None or r.spec.lock.archetype == lock]
        return 100.0 * sum(r.success for r in trials) / len(trials) if trials else 0.0

    def failure_counts(self) -> dict[str, int]:
        counts = Counter(r.failure_class for r in self.trials)
        return {k: counts.get(k, 0) for k in FAILURE_CLASSES}

    def summary(self) -> dict:
        locks = sorted({r.spec.lock.archetype for r in self.trials},
                       key=lambda a: ARCHETYPES.index(a))
        per_lock = {}
        for lock in locks:
            trials = [r for r in self.trials if r.spec.lock.archetype == lock]
            times = [r.insertion_time for r in trials if r.success]
            per_lock[lock] = {
                "trials": len(trials),
                "successes": sum(r.success for r in trials),
                "rate": int(round(self.success_rate(lock))),
                "mean_time": int(round(float(np.mean(times)))) if times else None,
            }
        times = [r.insertion_time for r in self.trials if r.success]
        return {
            "kind": self.kind,
            "trials": len(self.trials),
            "successes": sum(r.success for r in self.trials),
            "rate": int(round(self.success_rate())),
            "mean_time": int(round(float(np.mean(times)))) if times else None,
            "failures": self.failure_counts(),
            "locks": per_lock,
            "cells": [dict(zip(REPORT_COLUMNS, row)) for row in self.rows()],
        }


def _offset_pose(axis: str, value: float) -> Pose6:
    field_name, scale, _ = AXES[axis]
    return Pose6(**{field_name: value * scale})


def _format_value(v: float) -> str:
    return f"{v:g}"


def run_single_axis_sweep(lock: LockModel | str, axis: str, offsets=None, trials_per_cell: int = 3,
                          seed: int = 0, report: CampaignReport | None = None,
                          **spec_kwargs) -> CampaignReport:
    """Perturb one axis from the aligned pose; one cell per offset value."""
    lock = preset(lock) if isinstance(lock, str) else lock
    if axis not in AXES:
        raise ValueError(f"axis must be one of {tuple(AXES)}")
    offsets = SWEEP_OFFSETS[axis] if offsets is None else offsets
    report = report if report is not None else CampaignReport("sweep")
    if trials_per_cell <= 0:
        return report
    for value in offsets:
        cell = report.cell(lock.archetype, axis, _format_value(value))
        for rep in range(trials_per_cell):
            spec = TrialSpec(lock, _offset_pose(axis, value),
                             rng_seed=_trial_seed(seed, lock.archetype, axis, value, rep),
                             **spec_kwargs)
            record = run_trial(spec)
            report.trials.append(record)
            cell.add(record)
    return report


def run_default_sweep(locks=ARCHETYPES, trials_per_cell: int = 3, seed: int = 0,
                    **spec_kwargs) -> CampaignReport:
    report = CampaignReport("sweep")
    for lock in locks:
        for axis in AXES:
            run_single_axis_sweep(lock, axis, trials_per_cell=trials_per_cell, seed=seed,
                                  report=report, **spec_kwargs)
    return report


def _trial_seed(seed: int, *key) -> int:
    """Stable per-trial seed derived from the campaign seed and the trial's cell key."""
    words = [int(b) for b in "|".join(str(k) for k in key).encode()]
    return int(np.random.SeedSequence([seed, *words]).generate_state(1)[0])


def sample_random_offsets(n_trials: int, seed: int) -> list[Pose6]:
    """Uniform lateral (X, Z) translations and Euler-angle rotations."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_trials):
        tx, tz = rng.uniform(-TRANSLATION_RANGE_MM, TRANSLATION_RANGE_MM, 2)
        ra, rb, rg = rng.uniform(-ROTATION_RANGE_DEG, ROTATION_RANGE_DEG, 3)
        out.append(Pose6.from_mm_deg(x=tx, z=tz, alpha=ra, beta=rb, gamma=rg))
    return out


def bin_label(value: float, unit: str) -> str:
    edges = RANDOM_BINS[unit]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if value < hi or hi == edges[-1]:
            return f"({_format_value(lo)},{_format_value(hi)})"
    raise AssertionError("unreachable")


def offset_in_units(offset: Pose6, axis: str) -> float:
    field_name, scale, _ = AXES[axis]
    return getattr(offset, field_name) / scale


def run_random_campaign(lock: LockModel | str, n_trials: int = 30, seed: int = 0,
                        report: CampaignReport | None = None, **spec_kwargs) -> CampaignReport:
    """Random initial poses, binned into marginal cells per perturbed axis."""
    lock = preset(lock) if isinstance(lock, str) else lock
    report = report if report is not None else CampaignReport("random")
    for axis, (_, _, unit) in AXES.items():
        edges = RANDOM_BINS[unit]
        for lo, hi in zip(edges[:-1], edges[1:]):
            report.cell(lock.archetype, axis, f"({_format_value(lo)},{_format_value(hi)})")
    for i, offset in enumerate(sample_random_offsets(n_trials, seed)):
        spec = TrialSpec(lock, offset, rng_seed=_trial_seed(seed, lock.archetype, "random", i),
                         **spec_kwargs)
        record = run_trial(spec)
        report.trials.append(record)
        for axis, (_, _, unit) in AXES.items():
            report.cell(lock.archetype, axis, bin_label(offset_in_units(offset, axis), unit)).add(record)
    return report


REPORT_COLUMNS = ("lock", "axis", "bin", "n", "successes", "rate", "mean_time")


def write_report_csv(report: CampaignReport, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for row in report.rows():
                writer.writerow(["" if v is None else v for v in row])
    except OSError as exc:
        raise OSError(f"could not write report {path}: {exc}") from exc
    return path


def read_report_csv(path) -> list[tuple]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for lock, axis, bin_, n, succ, rate, mean_time in reader:
            rows.append((lock, axis, bin_, int(n), int(succ), int(rate),
                         int(mean_time) if mean_time else None))
    return rows


def write_summary_json(report: CampaignReport, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(report.summary(), indent=2))
    except OSError as exc:
        raise OSError(f"could not write summary {path}: {exc}") from exc
    return path


def write_trace_csv(record: TrialRecord, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for row in record.trace:
                writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OSError(f"could not write trace {path}: {exc}") from exc
    return path


def report(campaign: CampaignReport, out_dir, traces: bool = False) -> dict[str, Path]:
    """Write the cell CSV, the JSON summary and optionally one trace CSV per trial."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"could not create output directory {out_dir}: {exc}") from exc
    paths = {
        "cells": write_report_csv(campaign, out_dir / f"{campaign.kind}_cells.csv"),
        "summary": write_summary_json(campaign, out_dir / f"{campaign.kind}_summary.json"),
    }
    if traces:
        trace_dir = out_dir / "traces"
        trace_dir.mkdir(exist_ok=True)
        for i, record in enumerate(campaign.trials):
            name = f"{i:04d}_{record.spec.lock.archetype}.csv"
            paths[f"trace_{i}"] = write_trace_csv(record, trace_dir / name)
    return paths
