"""1RC equivalent-circuit battery model and profile generation.

Model: a series resistance r0, one r1||c1 polarization branch, and a linear
open-circuit voltage ocv(soc) = beta1 * soc + beta2. State is x = [v1, soc].
Sign convention: positive current charges the cell (soc integrates +I/cap).

Discretization is exact zero-order hold, so stepping a piecewise-constant
profile at any finer step that divides the segment boundaries reproduces the
coarse-step recursion to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidParamsError(ValueError):
    """Battery parameters violate positivity requirements."""


class InvalidConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


@dataclass(frozen=True)
class EcmParams:
    r0: float       # ohmic resistance [ohm]
    r1: float       # polarization resistance [ohm]
    c1: float       # polarization capacitance [F]
    cap: float      # capacity [A*s]
    beta1: float    # OCV slope [V / unit soc]
    beta2: float    # OCV intercept [V]

    def validate(self) -> "EcmParams":
        if not (self.r0 > 0 and self.r1 > 0 and self.c1 > 0 and self.cap > 0):
            raise InvalidParamsError("r0, r1, c1 and cap must all be positive")
        if not self.beta1 > 0:
            raise InvalidParamsError("beta1 must be positive (monotone OCV)")
        return self

    @property
    def tau(self) -> float:
        return self.r1 * self.c1


@dataclass(frozen=True)
class EcmState:
    v1: float = 0.0
    soc: float = 0.5


@dataclass(frozen=True)
class DiscreteModel:
    """Zero-order-hold discretization of the 1RC model for one timestep.

    a_d is diagonal: [[exp(-dt/(r1 c1)), 0], [0, 1]]. beta2 travels with the
    model so stepping can emit terminal voltage rather than the shifted
    output.
    """

    a_d: np.ndarray
    b_d: np.ndarray
    c_d: np.ndarray
    d_d: float
    dt: float
    beta2: float


def discretize(params: EcmParams, dt: float) -> DiscreteModel:
    """Exact ZOH discretization; dt = 0 degenerates to identity/zero."""
    params.validate()
    if dt < 0:
        raise InvalidParamsError("dt must be nonnegative")
    a = math.exp(-dt / (params.r1 * params.c1))
    return DiscreteModel(
        a_d=np.array([[a, 0.0], [0.0, 1.0]]),
        b_d=np.array([params.r1 * (1.0 - a), dt / params.cap]),
        c_d=np.array([1.0, params.beta1]),
        d_d=params.r0,
        dt=dt,
        beta2=params.beta2,
    )


def step(model: DiscreteModel, state: EcmState, current: float) -> tuple[EcmState, float]:
    """One ZOH step. Returns (next state, terminal voltage at the current instant)."""
    v = state.v1 + model.c_d[1] * state.soc + model.d_d * current + model.beta2
    nxt = EcmState(
        v1=model.a_d[0, 0] * state.v1 + model.b_d[0] * current,
        soc=state.soc + model.b_d[1] * current,
    )
    return nxt, v


@dataclass(frozen=True)
class CurrentProfile:
    """Piecewise-constant current at a uniform fine step.

    Stored as (amplitude, step count) segments to keep multi-hour profiles
    cheap; ``n_samples`` includes the final instant, so a profile covering
    k steps has k + 1 samples. The current at the final instant is the last
    segment's amplitude (right-continuous convention).
    """

    dt: float
    segments: tuple[tuple[float, int], ...]

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidConfigError("profile dt must be positive")
        for amp, m in self.segments:
            if m < 0:
                raise InvalidConfigError("segment length must be nonnegative")

    @property
    def n_steps(self) -> int:
        return sum(m for _, m in self.segments)

    @property
    def n_samples(self) -> int:
        return self.n_steps + 1

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    def currents(self) -> np.ndarray:
        """Materialized per-sample currents (use only at small scale)."""
        out = np.empty(self.n_samples)
        i = 0
        last = 0.0
        for amp, m in self.segments:
            out[i:i + m] = amp
            i += m
            if m:
                last = amp
        out[-1] = last
        return out

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt


@dataclass(frozen=True)
class SimTrace:
    """Per-sample simulation record, aligned with the driving profile."""

    time: np.ndarray
    current: np.ndarray
    voltage: np.ndarray
    soc: np.ndarray
    v1: np.ndarray

    def __len__(self) -> int:
        return len(self.time)


def simulate(params: EcmParams, profile: CurrentProfile, initial: EcmState) -> SimTrace:
    """Fold `step` over the profile, materializing the full trace.

    The inner loop is unrolled per constant-current segment with scalar
    arithmetic; the recursion is exactly the one `step` performs.
    """
    model = discretize(params, profile.dt)
    a = float(model.a_d[0, 0])
    b0 = float(model.b_d[0])
    b1 = float(model.b_d[1])
    beta1 = params.beta1
    beta2 = params.beta2
    r0 = params.r0

    n = profile.n_samples
    t = profile.times()
    cur = np.empty(n)
    volt = np.empty(n)
    socs = np.empty(n)
    v1s = np.empty(n)

    v1 = float(initial.v1)
    soc = float(initial.soc)
    i = 0
    last_amp = 0.0
    for amp, m in profile.segments:
        if m == 0:
            continue
        last_amp = amp
        cb = b0 * amp
        sb = b1 * amp
        ohm = r0 * amp + beta2
        for _ in range(m):
            cur[i] = amp
            volt[i] = v1 + beta1 * soc + ohm
            socs[i] = soc
            v1s[i] = v1
            v1 = a * v1 + cb
            soc = soc + sb
            i += 1
    cur[i] = last_amp
    volt[i] = v1 + beta1 * soc + r0 * last_amp + beta2
    socs[i] = soc
    v1s[i] = v1
    return SimTrace(time=t, current=cur, voltage=volt, soc=socs, v1=v1s)


@dataclass(frozen=True)
class DecimatedRun:
    """Estimator-rate view of a simulation plus soc excursion bookkeeping."""

    time: np.ndarray
    voltage: np.ndarray
    current: np.ndarray
    soc: np.ndarray
    soc_min: float
    soc_max: float


def simulate_decimated(params: EcmParams, profile: CurrentProfile,
                       initial: EcmState, factor: int) -> DecimatedRun:
    """Fold the fine-step recursion but only keep every `factor`-th sample.

    Equivalent to simulate() followed by decimation, without materializing
    multi-million-point traces. soc extremes are tracked exactly (soc is
    monotone within a constant-current segment, so checking segment
    boundaries suffices).
    """
    if factor < 1 or int(factor) != factor:
        raise InvalidConfigError("decimation factor must be a positive integer")
    factor = int(factor)
    model = discretize(params, profile.dt)
    a = float(model.a_d[0, 0])
    b0 = float(model.b_d[0])
    b1 = float(model.b_d[1])
    beta1 = params.beta1
    beta2 = params.beta2
    r0 = params.r0

    n_keep = profile.n_steps // factor + 1
    tt = np.arange(n_keep) * (profile.dt * factor)
    vv = np.empty(n_keep)
    ii = np.empty(n_keep)
    ss = np.empty(n_keep)

    v1 = float(initial.v1)
    soc = float(initial.soc)
    soc_min = soc
    soc_max = soc
    idx = 0        # fine-step index
    out = 0        # next output slot
    last_amp = 0.0
    for amp, m in profile.segments:
        if m == 0:
            continue
        last_amp = amp
        cb = b0 * amp
        sb = b1 * amp
        ohm = r0 * amp + beta2
        remaining = m
        while remaining:
            if idx % factor == 0:
                vv[out] = v1 + beta1 * soc + ohm
                ii[out] = amp
                ss[out] = soc
                out += 1
            # run uninterrupted until the next kept sample or segment end
            run = min(remaining, factor - idx % factor)
            for _ in range(run):
                v1 = a * v1 + cb
                soc = soc + sb
            idx += run
            remaining -= run
        if soc < soc_min:
            soc_min = soc
        elif soc > soc_max:
            soc_max = soc
    if idx % factor == 0 and out < n_keep:
        vv[out] = v1 + beta1 * soc + r0 * last_amp + beta2
        ii[out] = last_amp
        ss[out] = soc
        out += 1
    return DecimatedRun(time=tt[:out], voltage=vv[:out], current=ii[:out],
                        soc=ss[:out], soc_min=soc_min, soc_max=soc_max)


@dataclass(frozen=True)
class PulseConfig:
    """Random pulse train: holds at a drawn amplitude interleaved with rests.

    Durations are drawn uniformly then rounded to `quantum` (defaults to the
    profile step). sign_mode: 'alternating' flips the hold sign each pulse,
    'random' draws it, 'fixed' keeps it positive.
    """

    amp_min: float
    amp_max: float
    hold_min: float
    hold_max: float
    rest_min: float
    rest_max: float
    sign_mode: str
    duration: float

    def validate(self) -> "PulseConfig":
        if self.amp_min < 0 or self.amp_max < self.amp_min:
            raise InvalidConfigError("need 0 <= amp_min <= amp_max")
        if self.hold_min <= 0 or self.hold_max < self.hold_min:
            raise InvalidConfigError("need 0 < hold_min <= hold_max")
        if self.rest_min < 0 or self.rest_max < self.rest_min:
            raise InvalidConfigError("need 0 <= rest_min <= rest_max")
        if self.sign_mode not in ("alternating", "random", "fixed"):
            raise InvalidConfigError(f"unknown sign_mode {self.sign_mode!r}")
        if self.duration <= 0:
            raise InvalidConfigError("duration must be positive")
        return self


def gen_random_pulse(cfg: PulseConfig, seed: int, dt: float,
                     quantum: float | None = None) -> CurrentProfile:
    """Deterministic random pulse profile for a given seed.

    quantum snaps segment boundaries onto a coarser grid (the harness passes
    the estimator step so decimated samples line up with segment edges).
    """
    cfg.validate()
    if quantum is None:
        quantum = dt
    if quantum < dt or abs(round(quantum / dt) * dt - quantum) > 1e-9 * dt:
        raise InvalidConfigError("quantum must be a multiple of the profile step")
    rng = np.random.default_rng(seed)
    q_steps = round(quantum / dt)

    def draw_steps(lo: float, hi: float, at_least_one: bool) -> int:
        dur = rng.uniform(lo, hi)
        n_q = round(dur / quantum)
        if at_least_one:
            n_q = max(1, n_q)
        return n_q * q_steps

    total = round(cfg.duration / dt)
    segments: list[tuple[float, int]] = []
    used = 0
    sign = 1.0
    while used < total:
        amp = rng.uniform(cfg.amp_min, cfg.amp_max)
        if cfg.sign_mode == "alternating":
            amp *= sign
            sign = -sign
        elif cfg.sign_mode == "random":
            amp *= 1.0 if rng.random() < 0.5 else -1.0
        m = min(draw_steps(cfg.hold_min, cfg.hold_max, True), total - used)
        segments.append((amp, m))
        used += m
        if used >= total:
            break
        if cfg.rest_max > 0:
            r = min(draw_steps(cfg.rest_min, cfg.rest_max, False), total - used)
            if r:
                segments.append((0.0, r))
                used += r
    return CurrentProfile(dt=dt, segments=tuple(segments))


def theta_from_params(params: EcmParams, dt: float) -> np.ndarray:
    """Coefficients [a2, a3, a4, a5] of the voltage-difference regression.

    a1 = -a2 - 1 is implied and not stored. These are the z-domain transfer
    coefficients of the ZOH model; see recovery.params_from_theta for the
    inverse map.
    """
    params.validate()
    if dt <= 0:
        raise InvalidParamsError("dt must be positive")
    a2 = math.exp(-dt / (params.r1 * params.c1))
    w = params.beta1 * dt / params.cap
    a3 = params.r0
    a4 = params.r1 - params.r1 * a2 + w - params.r0 * a2 - params.r0
    a5 = -params.r1 + params.r1 * a2 - a2 * w + params.r0 * a2
    return np.array([a2, a3, a4, a5])
