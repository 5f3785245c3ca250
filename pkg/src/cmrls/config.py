"""Experiment configuration: schema, JSON loading, validation and echoing.

A config file is one JSON document. Every default the source material does
not pin (capacity, OCV line, noise magnitudes, thresholds) lives here and is
echoed verbatim into every report so no number is silently assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .ecm import EcmParams, EcmState, InvalidConfigError, PulseConfig
from .estimators import CmrlsConfig, InitConfig

# Ground-truth resistances/capacitance follow the published validation cell;
# cap/beta1/beta2 are unpublished and are project defaults, not asserted truth.
DEFAULT_ECM = EcmParams(
    r0=6.193e-3, r1=4.613e-1, c1=2.029e4,
    cap=8280.0, beta1=0.7, beta2=3.4,
)


@dataclass(frozen=True)
class NoiseConfig:
    """Additive measurement noise on the estimator-rate V and I samples.

    kind 'gaussian' uses sigma_* as standard deviations, 'uniform' as the
    half-width of a zero-mean uniform, 'none' disables noise.
    """

    kind: str = "gaussian"
    sigma_v: float = 1e-3
    sigma_i: float = 1e-2
    seed: int = 0

    def validate(self) -> "NoiseConfig":
        if self.kind not in ("gaussian", "uniform", "none"):
            raise InvalidConfigError(f"unknown noise kind {self.kind!r}")
        if self.sigma_v < 0 or self.sigma_i < 0:
            raise InvalidConfigError("noise magnitudes must be nonnegative")
        return self


@dataclass(frozen=True)
class HoldPhase:
    """Constant-current stretch (amp 0 = literal rest)."""

    amp: float
    duration: float

    def validate(self) -> "HoldPhase":
        if self.duration <= 0:
            raise InvalidConfigError("hold duration must be positive")
        return self


@dataclass(frozen=True)
class ProfileSpec:
    """Either a single pulse train or a list of phases (pulse/hold mix)."""

    phases: tuple[Any, ...]          # PulseConfig | HoldPhase
    windup_phase: int | None = None  # index of the designated poor-excitation phase

    def validate(self) -> "ProfileSpec":
        if not self.phases:
            raise InvalidConfigError("profile needs at least one phase")
        for p in self.phases:
            p.validate()
        if self.windup_phase is not None and not (0 <= self.windup_phase < len(self.phases)):
            raise InvalidConfigError("windup_phase out of range")
        return self

    @property
    def duration(self) -> float:
        return sum(p.duration for p in self.phases)


@dataclass(frozen=True)
class ExperimentConfig:
    ecm: EcmParams = DEFAULT_ECM
    initial: EcmState = EcmState(v1=0.0, soc=0.5)
    sim_dt: float = 0.01
    est_dt: float = 10.0
    profile: ProfileSpec = ProfileSpec(phases=(PulseConfig(
        amp_min=0.5, amp_max=2.5, hold_min=20.0, hold_max=60.0,
        rest_min=0.0, rest_max=0.0, sign_mode="alternating", duration=3600.0),))
    noise: NoiseConfig = NoiseConfig()
    algos: tuple[str, ...] = ("rls", "cmrls")
    lambda_for: float = 0.999
    cmrls: CmrlsConfig = CmrlsConfig()
    init: InitConfig = InitConfig()
    burn_in_frac: float = 0.1
    seed: int = 0
    ocv_table: tuple[tuple[float, float], ...] | None = None
    # declare beta1 or cap as known to split the identified beta1/cap ratio
    known_split: tuple[str, float] | None = None

    def validate(self) -> "ExperimentConfig":
        self.ecm.validate()
        self.profile.validate()
        self.noise.validate()
        self.cmrls.validate()
        self.init.validate()
        if self.sim_dt <= 0 or self.est_dt <= 0:
            raise InvalidConfigError("steps must be positive")
        factor = self.est_dt / self.sim_dt
        if abs(factor - round(factor)) > 1e-9 or round(factor) < 1:
            raise InvalidConfigError("est_dt must be an integer multiple of sim_dt")
        for algo in self.algos:
            if algo not in ("rls", "cmrls"):
                raise InvalidConfigError(f"unknown algorithm {algo!r}")
        if not self.algos:
            raise InvalidConfigError("need at least one algorithm")
        if not 0.0 < self.lambda_for <= 1.0:
            raise InvalidConfigError("lambda_for must be in (0, 1]")
        if not 0.0 <= self.burn_in_frac < 1.0:
            raise InvalidConfigError("burn_in_frac must be in [0, 1)")
        if self.ocv_table is not None:
            socs = [s for s, _ in self.ocv_table]
            if len(socs) < 2 or any(b <= a for a, b in zip(socs, socs[1:])):
                raise InvalidConfigError("ocv table needs >= 2 rows with increasing soc")
        if self.known_split is not None:
            field_name, value = self.known_split
            if field_name not in ("beta1", "cap") or value <= 0:
                raise InvalidConfigError(
                    "known_split must declare a positive 'beta1' or 'cap'")
        return self

    @property
    def decimation_factor(self) -> int:
        return round(self.est_dt / self.sim_dt)


def _phase_from_dict(d: dict) -> Any:
    kind = d.get("kind", "pulse")
    if kind == "pulse":
        return PulseConfig(
            amp_min=float(d["amp_min"]), amp_max=float(d["amp_max"]),
            hold_min=float(d["hold_min"]), hold_max=float(d["hold_max"]),
            rest_min=float(d.get("rest_min", 0.0)), rest_max=float(d.get("rest_max", 0.0)),
            sign_mode=str(d.get("sign_mode", "alternating")),
            duration=float(d["duration"]),
        )
    if kind == "hold":
        return HoldPhase(amp=float(d["amp"]), duration=float(d["duration"]))
    raise InvalidConfigError(f"unknown phase kind {kind!r}")


def _phase_to_dict(p: Any) -> dict:
    if isinstance(p, PulseConfig):
        return {"kind": "pulse", "amp_min": p.amp_min, "amp_max": p.amp_max,
                "hold_min": p.hold_min, "hold_max": p.hold_max,
                "rest_min": p.rest_min, "rest_max": p.rest_max,
                "sign_mode": p.sign_mode, "duration": p.duration}
    return {"kind": "hold", "amp": p.amp, "duration": p.duration}


def load_dict(doc: dict) -> ExperimentConfig:
    """Build and validate a config from a parsed JSON document."""
    try:
        ecm_d = doc.get("ecm", {})
        ecm = EcmParams(
            r0=float(ecm_d.get("r0", DEFAULT_ECM.r0)),
            r1=float(ecm_d.get("r1", DEFAULT_ECM.r1)),
            c1=float(ecm_d.get("c1", DEFAULT_ECM.c1)),
            cap=float(ecm_d.get("cap", DEFAULT_ECM.cap)),
            beta1=float(ecm_d.get("beta1", DEFAULT_ECM.beta1)),
            beta2=float(ecm_d.get("beta2", DEFAULT_ECM.beta2)),
        )
        init_d = doc.get("initial", {})
        initial = EcmState(v1=float(init_d.get("v1", 0.0)), soc=float(init_d.get("soc", 0.5)))
        prof_d = doc.get("profile")
        if prof_d is None:
            profile = ExperimentConfig().profile
        elif "phases" in prof_d:
            profile = ProfileSpec(
                phases=tuple(_phase_from_dict(p) for p in prof_d["phases"]),
                windup_phase=prof_d.get("windup_phase"),
            )
        else:
            profile = ProfileSpec(phases=(_phase_from_dict(prof_d),))
        noise_d = doc.get("noise", {})
        noise = NoiseConfig(
            kind=str(noise_d.get("kind", "gaussian")),
            sigma_v=float(noise_d.get("sigma_v", 1e-3)),
            sigma_i=float(noise_d.get("sigma_i", 1e-2)),
            seed=int(noise_d.get("seed", 0)),
        )
        cm_d = doc.get("cmrls", {})
        cm = CmrlsConfig(
            c_rem=float(cm_d.get("c_rem", 1e4)),
            c_upper=float(cm_d.get("c_upper", 1e8)),
            lambda_for=float(cm_d.get("lambda_for", doc.get("lambda_for", 0.999))),
            lambda_rem=float(cm_d.get("lambda_rem", 1.05)),
        )
        est_init_d = doc.get("init", {})
        theta0 = est_init_d.get("theta0")
        est_init = InitConfig(
            p0_scale=float(est_init_d.get("p0_scale", 1e3)),
            theta0=tuple(float(x) for x in theta0) if theta0 is not None else None,
        )
        ocv_rows = doc.get("ocv_table")
        if ocv_rows is None and doc.get("ocv_table_csv"):
            ocv_rows = _read_ocv_csv(doc["ocv_table_csv"])
        ocv = tuple((float(s), float(v)) for s, v in ocv_rows) if ocv_rows else None
        split_doc = doc.get("known_split")
        if split_doc is None:
            split = None
        elif isinstance(split_doc, dict) and len(split_doc) == 1:
            (field_name, value), = split_doc.items()
            split = (str(field_name), float(value))
        else:
            raise InvalidConfigError(
                "known_split must be an object with exactly one of beta1/cap")
        cfg = ExperimentConfig(
            ecm=ecm,
            initial=initial,
            sim_dt=float(doc.get("sim_dt_s", 0.01)),
            est_dt=float(doc.get("est_dt_s", 10.0)),
            profile=profile,
            noise=noise,
            algos=tuple(doc.get("algos", ["rls", "cmrls"])),
            lambda_for=float(doc.get("lambda_for", 0.999)),
            cmrls=cm,
            init=est_init,
            burn_in_frac=float(doc.get("burn_in_frac", 0.1)),
            seed=int(doc.get("seed", 0)),
            ocv_table=ocv,
            known_split=split,
        )
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, InvalidConfigError):
            raise
        raise InvalidConfigError(f"malformed config: {err}") from err
    return cfg.validate()


def _read_ocv_csv(path: str) -> list[tuple[float, float]]:
    """Rows of a `soc,ocv_v` table file."""
    import csv

    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"ocv table not found: {p}")
    rows: list[tuple[float, float]] = []
    with p.open() as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["soc", "ocv_v"]:
            raise InvalidConfigError(f"{p}: expected header soc,ocv_v")
        for row in reader:
            if row:
                rows.append((float(row[0]), float(row[1])))
    return rows


def load_file(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise InvalidConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise InvalidConfigError("config root must be a JSON object")
    return load_dict(doc)


def echo_dict(cfg: ExperimentConfig) -> dict:
    """Round-trippable, JSON-serializable view of a config for reports."""
    return {
        "ecm": {"r0": cfg.ecm.r0, "r1": cfg.ecm.r1, "c1": cfg.ecm.c1,
                "cap": cfg.ecm.cap, "beta1": cfg.ecm.beta1, "beta2": cfg.ecm.beta2},
        "initial": {"v1": cfg.initial.v1, "soc": cfg.initial.soc},
        "sim_dt_s": cfg.sim_dt,
        "est_dt_s": cfg.est_dt,
        "profile": {
            "phases": [_phase_to_dict(p) for p in cfg.profile.phases],
            "windup_phase": cfg.profile.windup_phase,
        },
        "noise": {"kind": cfg.noise.kind, "sigma_v": cfg.noise.sigma_v,
                  "sigma_i": cfg.noise.sigma_i, "seed": cfg.noise.seed},
        "algos": list(cfg.algos),
        "lambda_for": cfg.lambda_for,
        "cmrls": {"c_rem": cfg.cmrls.c_rem, "c_upper": cfg.cmrls.c_upper,
                  "lambda_for": cfg.cmrls.lambda_for, "lambda_rem": cfg.cmrls.lambda_rem},
        "init": {"p0_scale": cfg.init.p0_scale,
                 "theta0": list(cfg.init.theta0) if cfg.init.theta0 is not None else None},
        "burn_in_frac": cfg.burn_in_frac,
        "seed": cfg.seed,
        "ocv_table": [list(r) for r in cfg.ocv_table] if cfg.ocv_table else None,
        "known_split": {cfg.known_split[0]: cfg.known_split[1]} if cfg.known_split else None,
    }
