"""Monte-Carlo RMSE/timing evaluation of the estimators, with CSV output.

Trials are independent and embarrassingly parallel: each (SNR, trial) cell
draws its observation from a dedicated RNG substream, so results are
byte-identical for any worker count. BLAS threading is pinned to one
thread inside trials to keep per-trial numerics independent of the pool
configuration.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from threadpoolctl import threadpool_limits

from .crb import crb_single_closed_form
from .music2d import LmSettings
from .pipeline import estimate_3d_dft, grid_music_oracle, run_pi2dmusic
from .scenario import (Scenario, SmoothingConfig, SystemConfig, rayleigh_widths,
                       require_valid, with_snr)
from .signal_model import synthesize, trial_seed

ESTIMATORS = ("pi2dmusic", "dft3d", "grid_oracle")

CSV_HEADER = ("estimator", "snr_db", "rmse_theta_deg", "rmse_range_m",
              "rmse_velocity_mps", "rcrb_theta_deg", "rcrb_range_m",
              "rcrb_velocity_mps", "mean_wall_time_s", "trials_used", "failures")

TIMING_HEADER = ("n_antennas", "n_subcarriers", "n_symbols", "estimator",
                 "median_wall_time_s", "ratio_vs_pi2dmusic", "status")

_ORACLE_GUARD = 10_000_000
_TIMING_BYTES_BUDGET = 6 << 30


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunSpec:
    """One sweep configuration; everything the trials depend on."""

    scenario: Scenario
    snr_grid_db: tuple[float, ...]
    smoothing: SmoothingConfig
    trials: int = 200
    master_seed: int = 0
    estimators: tuple[str, ...] = ("pi2dmusic",)
    lm: LmSettings = field(default_factory=LmSettings)
    measure_time: bool = True
    oracle_step_fraction: float = 0.02   # grid step as a fraction of the Rayleigh width

    def __post_init__(self):
        if self.trials < 1:
            raise BenchError("trials must be at least 1")
        if len(self.snr_grid_db) == 0 or list(self.snr_grid_db) != sorted(self.snr_grid_db):
            raise BenchError("SNR grid must be non-empty and sorted")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise BenchError(f"unknown estimators {sorted(unknown)}")


@dataclass(frozen=True)
class RmseRow:
    estimator: str
    snr_db: float
    rmse_theta_deg: float
    rmse_range_m: float
    rmse_velocity_mps: float
    rcrb_theta_deg: float
    rcrb_range_m: float
    rcrb_velocity_mps: float
    mean_wall_time_s: float
    trials_used: int
    failures: int


@dataclass(frozen=True)
class TimingRow:
    dims: tuple[int, int, int]
    estimator: str
    median_wall_time_s: float
    ratio_vs_pi2dmusic: float
    status: str = "ok"


def truth_array(scenario: Scenario) -> np.ndarray:
    return np.array([(t.azimuth_deg, t.range_m, t.velocity_mps)
                     for t in scenario.targets], dtype=float)


def associate_squared_errors(truth: np.ndarray, estimates: np.ndarray) -> np.ndarray:
    """Per-parameter summed squared errors under the best target matching.

    Association is an evaluation choice: estimators emit unordered target
    lists, so the permutation minimizing the total squared error (over all
    three parameters) defines correspondence.
    """
    diff = truth[:, None, :] - estimates[None, :, :]
    cost = np.sum(diff ** 2, axis=2)
    rows, cols = linear_sum_assignment(cost)
    return np.sum((truth[rows] - estimates[cols]) ** 2, axis=0)


def rcrb_reference(scenario: Scenario, snr_db: float) -> tuple[float, float, float]:
    """Root bounds (deg, m, m/s) rms-averaged over targets, single-target form."""
    gamma = 10.0 ** (snr_db / 10.0)
    crbs = np.array([crb_single_closed_form(scenario.config, t, gamma)
                     for t in scenario.targets])
    mean = crbs.mean(axis=0)
    return (math.degrees(math.sqrt(mean[0])), math.sqrt(mean[1]), math.sqrt(mean[2]))


def oracle_grids_for(scenario: Scenario, snr_db: float,
                     step_fraction: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-dimension point lists around the true targets for the grid oracle.

    Windows are one Rayleigh width wide per target; the step is a fixed
    fraction of the Rayleigh width. Widths shrink if the product grid would
    exceed the oracle's point guard.
    """
    widths = np.array(rayleigh_widths(scenario.config))
    steps = step_fraction * widths
    truth = truth_array(scenario)
    shrink = 1.0
    for _ in range(20):
        grids = []
        for axis in range(3):
            pts = []
            half = 0.5 * widths[axis] * shrink
            count = max(3, int(round(2 * half / steps[axis])) + 1)
            for center in truth[:, axis]:
                pts.append(np.linspace(center - half, center + half, count))
            grids.append(np.unique(np.concatenate(pts)))
        total = grids[0].size * grids[1].size * grids[2].size
        if total <= _ORACLE_GUARD:
            return tuple(grids)
        shrink *= 0.6
    raise BenchError("could not fit oracle grids under the point guard")


def matched_accuracy_grids(scenario: Scenario,
                           snr_db: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Oracle grids stepped at a quarter of the root bound per axis.

    Windows start at half a Rayleigh width around each target and shrink
    until the product grid fits the oracle's point guard (the step, which
    sets the accuracy, is preserved).
    """
    gamma = 10.0 ** (snr_db / 10.0)
    crbs = np.array([crb_single_closed_form(scenario.config, t, gamma)
                     for t in scenario.targets])
    rcrb = np.sqrt(crbs.mean(axis=0))
    steps = np.array([math.degrees(rcrb[0]), rcrb[1], rcrb[2]]) / 4.0
    widths = np.array(rayleigh_widths(scenario.config))
    truth = truth_array(scenario)
    shrink = 1.0
    for _ in range(60):
        grids = []
        for axis in range(3):
            half = max(0.5 * widths[axis] * shrink, steps[axis])
            count = int(round(2 * half / steps[axis])) + 1
            pts = [np.linspace(c - half, c + half, count) for c in truth[:, axis]]
            grids.append(np.unique(np.concatenate(pts)))
        total = grids[0].size * grids[1].size * grids[2].size
        if total <= _ORACLE_GUARD:
            return tuple(grids)
        shrink *= 0.5
    raise BenchError("could not fit matched-accuracy grids under the point guard")


def _run_estimator(name: str, obs, scenario: Scenario, spec: RunSpec, oracle_grids):
    if name == "pi2dmusic":
        return run_pi2dmusic(obs, scenario.n_targets, spec.smoothing, spec.lm)
    if name == "dft3d":
        return estimate_3d_dft(obs, scenario.n_targets)
    if name == "grid_oracle":
        return grid_music_oracle(obs, scenario.n_targets, oracle_grids, spec.smoothing)
    raise BenchError(f"unknown estimator {name}")


def _sweep_trial(args):
    """One (SNR, trial) cell; runs every estimator on a shared observation."""
    spec, snr_db, trial_index, oracle_grids = args
    with threadpool_limits(limits=1):
        scen = with_snr(spec.scenario, snr_db)
        obs = synthesize(scen, trial_seed(spec.master_seed, trial_index))
        truth = truth_array(scen)
        out = {}
        for name in spec.estimators:
            start = time.perf_counter()
            try:
                est = _run_estimator(name, obs, scen, spec, oracle_grids)
                wall = time.perf_counter() - start
                sq = associate_squared_errors(truth, est.as_array())
                out[name] = (sq, wall, None)
            except Exception as exc:  # failure recorded, trial excluded from RMSE
                wall = time.perf_counter() - start
                out[name] = (None, wall, f"{type(exc).__name__}: {exc}")
        return out


def run_sweep(spec: RunSpec, workers: int = 1) -> list[RmseRow]:
    """Monte-Carlo RMSE per (estimator, SNR) cell.

    RMSE follows ``sqrt(mean_trials(||truth - est||^2 / U))`` per
    parameter. Failed trials are excluded from the RMSE and counted in the
    ``failures`` column. Wall time excludes synthesis. Output is
    deterministic for a fixed spec, independent of ``workers``.
    """
    require_valid(spec.scenario, spec.smoothing)
    n_snr = len(spec.snr_grid_db)
    jobs = []
    for si, snr in enumerate(spec.snr_grid_db):
        grids = None
        if "grid_oracle" in spec.estimators:
            grids = oracle_grids_for(spec.scenario, snr, spec.oracle_step_fraction)
        for w in range(spec.trials):
            jobs.append((spec, snr, si * spec.trials + w, grids))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_trial, jobs, chunksize=1))
    else:
        results = [_sweep_trial(job) for job in jobs]

    u = spec.scenario.n_targets
    rows = []
    for si, snr in enumerate(spec.snr_grid_db):
        cell = results[si * spec.trials:(si + 1) * spec.trials]
        rcrb = rcrb_reference(spec.scenario, snr)
        for name in spec.estimators:
            sq_sum = np.zeros(3)
            walls = []
            used = failures = 0
            for trial_out in cell:
                sq, wall, err = trial_out[name]
                if err is None:
                    sq_sum += sq / u
                    walls.append(wall)
                    used += 1
                else:
                    failures += 1
            if used:
                rmse = np.sqrt(sq_sum / used)
            else:
                rmse = np.full(3, np.nan)
            mean_wall = float(np.mean(walls)) if (walls and spec.measure_time) else float("nan")
            rows.append(RmseRow(
                estimator=name, snr_db=float(snr),
                rmse_theta_deg=float(rmse[0]), rmse_range_m=float(rmse[1]),
                rmse_velocity_mps=float(rmse[2]),
                rcrb_theta_deg=rcrb[0], rcrb_range_m=rcrb[1], rcrb_velocity_mps=rcrb[2],
                mean_wall_time_s=mean_wall, trials_used=used, failures=failures))
    return rows


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(rows: Sequence[RmseRow], path) -> None:
    """RFC-4180-style CSV with a fixed, documented column order."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow([_format(getattr(row, col)) for col in CSV_HEADER])
    except OSError as exc:
        raise BenchError(f"cannot write CSV to {path}: {exc}") from exc


def emit_dat(rows: Sequence[RmseRow], path) -> None:
    """gnuplot-friendly whitespace table mirroring the CSV columns."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + " ".join(CSV_HEADER) + "\n")
            for row in rows:
                fh.write(" ".join(_format(getattr(row, col)) for col in CSV_HEADER) + "\n")
    except OSError as exc:
        raise BenchError(f"cannot write table to {path}: {exc}") from exc


def read_csv(path) -> list[RmseRow]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append(RmseRow(
                estimator=rec["estimator"], snr_db=float(rec["snr_db"]),
                rmse_theta_deg=float(rec["rmse_theta_deg"]),
                rmse_range_m=float(rec["rmse_range_m"]),
                rmse_velocity_mps=float(rec["rmse_velocity_mps"]),
                rcrb_theta_deg=float(rec["rcrb_theta_deg"]),
                rcrb_range_m=float(rec["rcrb_range_m"]),
                rcrb_velocity_mps=float(rec["rcrb_velocity_mps"]),
                mean_wall_time_s=float(rec["mean_wall_time_s"]),
                trials_used=int(rec["trials_used"]), failures=int(rec["failures"])))
        return rows


def _timing_bytes_estimate(config: SystemConfig, smoothing: SmoothingConfig) -> int:
    sub = smoothing.sub_dims
    d3 = sub[0] * sub[1] * sub[2]
    s3 = int(np.prod(smoothing.snapshot_counts(config)))
    cube = 16 * int(np.prod(config.dims))
    return max(16 * d3 * d3 * 3, 16 * min(d3 * s3, d3 * 2048 * 2 + d3 * d3 * 2), cube * 4)


def run_timing(spec: RunSpec, dims_grid: Sequence[tuple[int, int, int]],
               repeats: int = 5) -> list[TimingRow]:
    """Median wall time of each estimator over shared observations.

    ``smoothing`` in the spec is ignored here: timing uses the fixed-ratio
    preset so windows track the dims grid. Rows whose projected working
    set exceeds the memory budget are skipped with a reason.
    """
    rows = []
    for dims in dims_grid:
        config = replace(spec.scenario.config, n_antennas=dims[0],
                         n_subcarriers=dims[1], n_symbols=dims[2])
        scen = Scenario(config=config, targets=spec.scenario.targets,
                        snr_db=spec.scenario.snr_db)
        smoothing = SmoothingConfig.from_ratios(config)
        if _timing_bytes_estimate(config, smoothing) > _TIMING_BYTES_BUDGET:
            for name in spec.estimators:
                rows.append(TimingRow(dims=dims, estimator=name,
                                      median_wall_time_s=float("nan"),
                                      ratio_vs_pi2dmusic=float("nan"),
                                      status="skipped: memory budget"))
            continue
        require_valid(scen, smoothing)
        obs = synthesize(scen, trial_seed(spec.master_seed, 0))
        grids = matched_accuracy_grids(scen, scen.snr_db) \
            if "grid_oracle" in spec.estimators else None
        timing_spec = replace(spec, scenario=scen, smoothing=smoothing)
        medians = {}
        for name in spec.estimators:
            walls = []
            status = "ok"
            for _ in range(repeats):
                start = time.perf_counter()
                try:
                    _run_estimator(name, obs, scen, timing_spec, grids)
                except Exception as exc:
                    status = f"failed: {type(exc).__name__}"
                    break
                walls.append(time.perf_counter() - start)
            medians[name] = (statistics.median(walls) if walls else float("nan"), status)
        base = medians.get("pi2dmusic", (float("nan"), "absent"))[0]
        for name in spec.estimators:
            med, status = medians[name]
            ratio = med / base if (base and not math.isnan(base) and not math.isnan(med)) \
                else float("nan")
            rows.append(TimingRow(dims=dims, estimator=name, median_wall_time_s=med,
                                  ratio_vs_pi2dmusic=ratio, status=status))
    return rows


def emit_timing_csv(rows: Sequence[TimingRow], path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(TIMING_HEADER)
            for row in rows:
                writer.writerow([str(row.dims[0]), str(row.dims[1]), str(row.dims[2]),
                                 row.estimator, _format(row.median_wall_time_s),
                                 _format(row.ratio_vs_pi2dmusic), row.status])
    except OSError as exc:
        raise BenchError(f"cannot write CSV to {path}: {exc}") from exc
