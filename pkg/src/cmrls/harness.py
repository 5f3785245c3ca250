"""Experiment orchestration: profiles, simulation, identification, reports.

The pipeline for one experiment is

    profile -> fine-step simulation -> estimator-rate sampling -> sensor
    noise -> regressor stream -> RLS / CMRLS -> parameter recovery -> MAE

Every stage is a pure function of the config (all randomness is seeded), so
two runs of the same config produce byte-identical artifacts. Wall-clock
timings are written to a separate sidecar so the main report stays
deterministic.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import recovery
from .config import ExperimentConfig, HoldPhase, ProfileSpec, echo_dict
from .ecm import (CurrentProfile, DecimatedRun, EcmParams,
                  InvalidConfigError, SimTrace, gen_random_pulse,
                  simulate_decimated)
from .estimators import IdentTrace, run_identification
from .regression import SampleWindow, samples_from_arrays

SOC_WARN_LOW = 0.05
SOC_WARN_HIGH = 0.95

REPORT_SCHEMA = "cmrls-report-v1"


class InputDataError(ValueError):
    """An input CSV is malformed or inconsistent."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# profiles


def build_profile(spec: ProfileSpec, seed: int, sim_dt: float, est_dt: float,
                  ) -> tuple[CurrentProfile, list[tuple[float, float]]]:
    """Concatenate the phases into one fine-step profile.

    Pulse phases get independent per-phase substreams of `seed`; segment
    boundaries are quantized to the estimator step so decimated samples see
    piecewise-constant current. Returns the profile and per-phase
    [start, end) times.
    """
    segments: list[tuple[float, int]] = []
    bounds: list[tuple[float, float]] = []
    t = 0.0
    for idx, phase in enumerate(spec.phases):
        if isinstance(phase, HoldPhase):
            n = round(phase.duration / sim_dt)
            segments.append((phase.amp, n))
        else:
            sub = gen_random_pulse(phase, seed=seed * 1009 + idx, dt=sim_dt,
                                   quantum=est_dt)
            segments.extend(sub.segments)
            n = sub.n_steps
        bounds.append((t, t + n * sim_dt))
        t += n * sim_dt
    return CurrentProfile(dt=sim_dt, segments=tuple(segments)), bounds


def profile_from_config(cfg: ExperimentConfig) -> tuple[CurrentProfile, list[tuple[float, float]]]:
    return build_profile(cfg.profile, cfg.seed, cfg.sim_dt, cfg.est_dt)


def write_profile_csv(path: str | Path, profile: CurrentProfile,
                      echo: dict | None = None) -> int:
    """`time_s,current_a` rows at the fine step; config echo as # comments."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if echo:
            for line in json.dumps(echo, sort_keys=True, indent=None).split("\n"):
                fh.write(f"# {line}\n")
        fh.write("time_s,current_a\n")
        dt = profile.dt
        idx = 0
        last = 0.0
        for amp, m in profile.segments:
            if m == 0:
                continue
            last = amp
            amp_s = _fmt(amp)
            for _ in range(m):
                fh.write(f"{_fmt(idx * dt)},{amp_s}\n")
                idx += 1
        fh.write(f"{_fmt(idx * dt)},{_fmt(last)}\n")
    return profile.n_samples


def read_profile_csv(path: str | Path) -> CurrentProfile:
    """Rebuild a profile from CSV, run-length encoding equal currents."""
    path = Path(path)
    times: list[float] = []
    currents: list[float] = []
    with path.open() as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["time_s", "current_a"]:
            raise InputDataError(f"{path}: expected header time_s,current_a")
        for row in reader:
            if not row:
                continue
            times.append(float(row[0]))
            currents.append(float(row[1]))
    if len(times) < 2:
        raise InputDataError(f"{path}: need at least two samples")
    t = np.asarray(times)
    dt = float(t[1] - t[0])
    if dt <= 0 or np.abs(np.diff(t) - dt).max() > 1e-6 * dt:
        raise InputDataError(f"{path}: timestamps are not uniformly spaced")
    segments: list[tuple[float, int]] = []
    for amp in currents[:-1]:
        if segments and segments[-1][0] == amp:
            segments[-1] = (amp, segments[-1][1] + 1)
        else:
            segments.append((amp, 1))
    return CurrentProfile(dt=dt, segments=tuple(segments))


# ---------------------------------------------------------------------------
# simulation artifacts


def write_trace_csv(path: str | Path, trace: SimTrace) -> int:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("time_s,current_a,voltage_v,soc,v1_v\n")
        for k in range(len(trace)):
            fh.write(",".join([
                _fmt(trace.time[k]), _fmt(trace.current[k]), _fmt(trace.voltage[k]),
                _fmt(trace.soc[k]), _fmt(trace.v1[k]),
            ]) + "\n")
    return len(trace)


def read_measurements_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t, v, i) from any CSV carrying time_s, current_a and voltage_v columns."""
    path = Path(path)
    with path.open() as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise InputDataError(f"{path}: empty file")
        cols = {name.strip(): k for k, name in enumerate(header)}
        for need in ("time_s", "current_a", "voltage_v"):
            if need not in cols:
                raise InputDataError(f"{path}: missing column {need}")
        ti, ci, vi = cols["time_s"], cols["current_a"], cols["voltage_v"]
        t, v, i = [], [], []
        for row in reader:
            if not row:
                continue
            t.append(float(row[ti]))
            v.append(float(row[vi]))
            i.append(float(row[ci]))
    if len(t) < 3:
        raise InputDataError(f"{path}: need at least three samples")
    return np.asarray(t), np.asarray(v), np.asarray(i)


def write_measurements_csv(path: str | Path, t: np.ndarray, v: np.ndarray,
                           i: np.ndarray) -> int:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("time_s,current_a,voltage_v\n")
        for k in range(len(t)):
            fh.write(f"{_fmt(t[k])},{_fmt(i[k])},{_fmt(v[k])}\n")
    return len(t)


def apply_ocv_table(voltage: np.ndarray, soc: np.ndarray, params: EcmParams,
                    table: tuple[tuple[float, float], ...]) -> np.ndarray:
    """Swap the linear OCV term for a tabulated curve on a simulated trace.

    OCV does not feed back into the state dynamics, so replacing it after
    the fact is exactly equivalent to simulating with the table. The table
    is linearly interpolated and linearly extrapolated beyond its ends.
    """
    socs = np.array([s for s, _ in table])
    ocvs = np.array([o for _, o in table])
    slope_lo = (ocvs[1] - ocvs[0]) / (socs[1] - socs[0])
    slope_hi = (ocvs[-1] - ocvs[-2]) / (socs[-1] - socs[-2])
    tabulated = np.interp(soc, socs, ocvs)
    below = soc < socs[0]
    above = soc > socs[-1]
    tabulated = np.where(below, ocvs[0] + slope_lo * (soc - socs[0]), tabulated)
    tabulated = np.where(above, ocvs[-1] + slope_hi * (soc - socs[-1]), tabulated)
    return voltage - (params.beta1 * soc + params.beta2) + tabulated


def apply_noise(v: np.ndarray, i: np.ndarray, kind: str, sigma_v: float,
                sigma_i: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Additive sensor noise on the estimator-rate measurement stream."""
    if kind == "none" or (sigma_v == 0.0 and sigma_i == 0.0):
        return v.copy(), i.copy()
    rng = np.random.default_rng(seed)
    n = len(v)
    if kind == "gaussian":
        nv = rng.normal(0.0, 1.0, n) * sigma_v
        ni = rng.normal(0.0, 1.0, n) * sigma_i
    elif kind == "uniform":
        nv = rng.uniform(-1.0, 1.0, n) * sigma_v
        ni = rng.uniform(-1.0, 1.0, n) * sigma_i
    else:
        raise InvalidConfigError(f"unknown noise kind {kind!r}")
    return v + nv, i + ni


def measurements_from_config(cfg: ExperimentConfig) -> tuple[DecimatedRun, np.ndarray, np.ndarray, list[tuple[float, float]]]:
    """(clean decimated run, noisy V, noisy I, phase bounds) for a config."""
    profile, bounds = profile_from_config(cfg)
    run = simulate_decimated(cfg.ecm, profile, cfg.initial, cfg.decimation_factor)
    voltage = run.voltage
    if cfg.ocv_table is not None:
        voltage = apply_ocv_table(voltage, run.soc, cfg.ecm, cfg.ocv_table)
    vm, im = apply_noise(voltage, run.current, cfg.noise.kind,
                         cfg.noise.sigma_v, cfg.noise.sigma_i, cfg.noise.seed)
    return run, vm, im, bounds


# ---------------------------------------------------------------------------
# identification runs and reports


@dataclass
class AlgoResult:
    algo: str
    trace: IdentTrace
    estimates: list[recovery.PhysicalEstimate]
    recovery_table: dict
    kappa_max: float
    kappa_final: float
    frac_above_c_upper: float
    seconds: float

    @property
    def us_per_step(self) -> float:
        n = max(1, len(self.trace))
        return self.seconds / n * 1e6


def run_algo(t: np.ndarray, v: np.ndarray, i: np.ndarray, algo: str,
             cfg: ExperimentConfig) -> AlgoResult:
    samples = samples_from_arrays(t, v, i)
    t0 = time.perf_counter()
    trace = run_identification(
        samples, algo, init=cfg.init, lambda_for=cfg.lambda_for,
        cmrls=cfg.cmrls if algo == "cmrls" else None)
    seconds = time.perf_counter() - t0
    estimates = recovery.estimates_from_theta_series(trace.theta, cfg.est_dt)
    table = recovery.mean_abs_error(estimates, cfg.ecm, cfg.burn_in_frac)
    if cfg.known_split is not None:
        field_name, value = cfg.known_split
        derived, entry = recovery.split_ratio_table(
            estimates, cfg.ecm, field_name, value, cfg.burn_in_frac)
        table[derived] = entry
    kappa = trace.kappa
    return AlgoResult(
        algo=algo,
        trace=trace,
        estimates=estimates,
        recovery_table=table,
        kappa_max=float(kappa.max()) if len(kappa) else 0.0,
        kappa_final=float(kappa[-1]) if len(kappa) else 0.0,
        frac_above_c_upper=float((kappa > cfg.cmrls.c_upper).mean()) if len(kappa) else 0.0,
        seconds=seconds,
    )


@dataclass
class CompareResult:
    config: ExperimentConfig
    run: DecimatedRun
    v_meas: np.ndarray
    i_meas: np.ndarray
    phase_bounds: list[tuple[float, float]]
    results: dict[str, AlgoResult]
    simulate_seconds: float


def run_compare(cfg: ExperimentConfig) -> CompareResult:
    cfg.validate()
    t0 = time.perf_counter()
    run, vm, im, bounds = measurements_from_config(cfg)
    sim_s = time.perf_counter() - t0
    results = {algo: run_algo(run.time, vm, im, algo, cfg) for algo in cfg.algos}
    return CompareResult(config=cfg, run=run, v_meas=vm, i_meas=im,
                         phase_bounds=bounds, results=results,
                         simulate_seconds=sim_s)


def windup_stats(result: CompareResult) -> dict | None:
    """kappa growth over the designated poor-excitation phase, per algorithm."""
    cfg = result.config
    idx = cfg.profile.windup_phase
    if idx is None:
        return None
    t_start, t_end = result.phase_bounds[idx]
    out = {"phase": idx, "start_s": t_start, "end_s": t_end, "algorithms": {}}
    for algo, res in result.results.items():
        tt = res.trace.time
        inside = (tt >= t_start) & (tt < t_end)
        before = tt < t_start
        if not inside.any() or not before.any():
            continue
        kappa_pre = float(res.trace.kappa[before][-1])
        kappa_max = float(res.trace.kappa[inside].max())
        out["algorithms"][algo] = {
            "kappa_pre": kappa_pre,
            "kappa_max": kappa_max,
            "growth": kappa_max / kappa_pre if kappa_pre > 0 else float("inf"),
        }
    return out


def soc_summary(run: DecimatedRun) -> dict:
    warn = run.soc_min < SOC_WARN_LOW or run.soc_max > SOC_WARN_HIGH
    return {"min": run.soc_min, "max": run.soc_max, "outside_soft_bounds": warn}


def build_report(result: CompareResult) -> dict:
    """Deterministic report body (no wall-clock content)."""
    cfg = result.config
    report = {
        "schema": REPORT_SCHEMA,
        "config": echo_dict(cfg),
        "profile": {
            "duration_s": result.phase_bounds[-1][1] if result.phase_bounds else 0.0,
            "phase_bounds_s": [list(b) for b in result.phase_bounds],
            "estimator_steps": int(len(result.run.time)),
        },
        "soc": soc_summary(result.run),
        "algorithms": {},
    }
    for algo, res in result.results.items():
        report["algorithms"][algo] = {
            "recovery": res.recovery_table,
            "kappa": {
                "max": res.kappa_max,
                "final": res.kappa_final,
                "frac_above_c_upper": res.frac_above_c_upper,
            },
            "events": res.trace.event_counts(),
            "steps": len(res.trace),
        }
    wind = windup_stats(result)
    if wind is not None:
        report["windup"] = wind
    return report


def build_timing(result: CompareResult) -> dict:
    return {
        "simulate_seconds": result.simulate_seconds,
        "algorithms": {
            algo: {
                "steps": len(res.trace),
                "seconds": res.seconds,
                "us_per_step": res.us_per_step,
            }
            for algo, res in result.results.items()
        },
    }


def json_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()


def write_ident_csv(path: str | Path, trace: IdentTrace) -> int:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("time_s,a2,a3,a4,a5,kappa,event\n")
        for k in range(len(trace)):
            th = trace.theta[k]
            fh.write(",".join([
                _fmt(trace.time[k]), _fmt(th[0]), _fmt(th[1]), _fmt(th[2]),
                _fmt(th[3]), _fmt(trace.kappa[k]), trace.events[k],
            ]) + "\n")
    return len(trace)


# criterion-6 style parameters reported in plot data
PLOT_FIELDS = ("r0", "tau", "r1", "c1")


def write_plot_csvs(out_dir: Path, result: CompareResult) -> list[str]:
    """One time-series CSV per (algorithm, physical parameter) with truth column."""
    truths = recovery.true_values(result.config.ecm)
    written = []
    for algo, res in result.results.items():
        tt = res.trace.time
        for name in PLOT_FIELDS:
            fname = f"params_{algo}_{name}.csv"
            with (out_dir / fname).open("w", newline="") as fh:
                fh.write("time_s,estimate,true\n")
                tv = _fmt(truths[name])
                for k in range(len(tt)):
                    est = res.estimates[k]
                    val = est.value(name) if est.valid.get(name, False) else None
                    cell = _fmt(val) if val is not None and np.isfinite(val) else ""
                    fh.write(f"{_fmt(tt[k])},{cell},{tv}\n")
            written.append(fname)
    return written


def write_compare_outputs(result: CompareResult, out_dir: str | Path) -> dict:
    """All compare artifacts; returns the file manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    write_measurements_csv(out / "measured.csv", result.run.time,
                           result.v_meas, result.i_meas)
    files.append("measured.csv")
    for algo, res in result.results.items():
        write_ident_csv(out / f"{algo}_trace.csv", res.trace)
        files.append(f"{algo}_trace.csv")
    files.extend(write_plot_csvs(out, result))
    report = build_report(result)
    (out / "report.json").write_bytes(json_bytes(report))
    files.append("report.json")
    (out / "timing.json").write_bytes(json_bytes(build_timing(result)))
    files.append("timing.json")
    return {"out_dir": str(out), "files": sorted(files), "report": report}


def identify_csv(cfg: ExperimentConfig, trace_path: str | Path, algo: str,
                 out_dir: str | Path) -> dict:
    """Identify from a measurement CSV (fine-rate traces are decimated first)."""
    cfg.validate()
    t, v, i = read_measurements_csv(trace_path)
    spacing = float(t[1] - t[0])
    if abs(spacing - cfg.est_dt) > 0.01 * cfg.est_dt:
        # fine-rate trace: decimate down to the estimator step first
        ratio = cfg.est_dt / spacing
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise InputDataError(
                f"sample spacing {spacing} is neither the estimator step nor divides it")
        step = round(ratio)
        t, v, i = t[::step], v[::step], i[::step]

    window = SampleWindow(cfg.est_dt)
    samples = []
    for k in range(len(t)):
        s = window.push(float(v[k]), float(i[k]), float(t[k]))
        if s is not None:
            samples.append(s)

    t0 = time.perf_counter()
    trace = run_identification(samples, algo, init=cfg.init,
                               lambda_for=cfg.lambda_for,
                               cmrls=cfg.cmrls if algo == "cmrls" else None)
    seconds = time.perf_counter() - t0
    estimates = recovery.estimates_from_theta_series(trace.theta, cfg.est_dt)
    table = recovery.mean_abs_error(estimates, cfg.ecm, cfg.burn_in_frac)
    if cfg.known_split is not None:
        field_name, value = cfg.known_split
        derived, entry = recovery.split_ratio_table(
            estimates, cfg.ecm, field_name, value, cfg.burn_in_frac)
        table[derived] = entry

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ident_csv(out / f"{algo}_trace.csv", trace)
    kappa = trace.kappa
    report = {
        "schema": REPORT_SCHEMA,
        "algo": algo,
        "config": echo_dict(cfg),
        "input": str(trace_path),
        "recovery": table,
        "kappa": {
            "max": float(kappa.max()) if len(kappa) else 0.0,
            "final": float(kappa[-1]) if len(kappa) else 0.0,
            "frac_above_c_upper": float((kappa > cfg.cmrls.c_upper).mean()) if len(kappa) else 0.0,
            "exceeded_c_upper": bool((kappa > cfg.cmrls.c_upper).any()) if len(kappa) else False,
        },
        "events": trace.event_counts(),
        "steps": len(trace),
    }
    (out / f"{algo}_report.json").write_bytes(json_bytes(report))
    (out / f"{algo}_timing.json").write_bytes(json_bytes(
        {"steps": len(trace), "seconds": seconds,
         "us_per_step": seconds / max(1, len(trace)) * 1e6}))
    return report
