"""Turn a (time, current, voltage) stream into voltage-difference regressor samples.

Each sample pairs the output d_t = V_t - V_{t-1} with the regressor
phi_t = [V_{t-1} - V_{t-2}, I_t, I_{t-1}, I_{t-2}], so three consecutive
points are needed before the first sample comes out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ecm import InvalidConfigError, SimTrace


class NonMonotoneTimeError(ValueError):
    """Timestamps must strictly advance."""


class InvalidFactorError(ValueError):
    """Decimation factor must be a positive integer."""


@dataclass(frozen=True)
class RegressorSample:
    d: float
    phi: np.ndarray     # [dV_prev, i_t, i_prev, i_prev2]
    t: float


class SampleWindow:
    """Ring of the last three (V, I) points at the estimator rate.

    Each point is assigned to its nearest nominal grid slot (the grid is
    anchored at the first push). On-grid points pass through bit-exact;
    jittered late arrivals are linearly interpolated onto their grid stamp
    from the bracketing raw points, early ones are taken at face value. A
    slot with no data at all flushes the window and re-anchors the grid,
    restarting the two-point warm-up.

    A window owns its mutable state: one per stream, no concurrent pushers.
    """

    def __init__(self, est_dt: float):
        if est_dt <= 0:
            raise InvalidConfigError("est_dt must be positive")
        self.est_dt = est_dt
        self._t0: float | None = None
        self._k = 0                      # grid index of the next expected point
        self._raw: tuple[float, float, float] | None = None   # (t, v, i) last raw point
        self._hist: list[tuple[float, float, float]] = []     # accepted grid points

    def _grid_time(self) -> float:
        return self._t0 + self._k * self.est_dt

    def _accept(self, t: float, v: float, i: float) -> RegressorSample | None:
        self._hist.append((t, v, i))
        if len(self._hist) > 3:
            self._hist.pop(0)
        self._k += 1
        if len(self._hist) < 3:
            return None
        (_, v2, i2), (_, v1, i1), (tc, vc, ic) = self._hist
        return RegressorSample(
            d=vc - v1,
            phi=np.array([v1 - v2, ic, i1, i2]),
            t=tc,
        )

    def push(self, v: float, i: float, t: float) -> RegressorSample | None:
        if self._raw is not None and t <= self._raw[0]:
            raise NonMonotoneTimeError(f"time {t} does not advance past {self._raw[0]}")
        if self._t0 is None:
            self._t0 = t
            self._raw = (t, v, i)
            return self._accept(t, v, i)

        dt = self.est_dt
        slot = round((t - self._t0) / dt)   # nearest grid slot for this point
        tg = self._t0 + self._k * dt
        out: RegressorSample | None = None
        if slot > self._k:
            # at least one slot has no data: flush and re-anchor rather
            # than fabricate the missing samples
            self._hist.clear()
            self._t0 = t
            self._k = 0
            out = self._accept(t, v, i)
        elif slot == self._k:
            tp, vp, ip = self._raw
            if t > tg + 1e-9 * dt and tp < tg - 1e-9 * dt:
                # late arrival with a bracket: interpolate onto the grid stamp
                w = (tg - tp) / (t - tp)
                out = self._accept(tg, vp + w * (v - vp), ip + w * (i - ip))
            else:
                # on-grid (bit-exact) or early: take the values at the stamp
                out = self._accept(tg, v, i)
        # slot < self._k: sub-period extra point; keep it as interpolation
        # fodder but emit nothing
        self._raw = (t, v, i)
        return out


def samples_from_arrays(t: np.ndarray, v: np.ndarray, i: np.ndarray) -> list[RegressorSample]:
    """Vectorized equivalent of pushing an exactly-gridded stream through a window."""
    n = len(t)
    if n < 3:
        return []
    d = v[2:] - v[1:-1]
    phi = np.stack([v[1:-1] - v[:-2], i[2:], i[1:-1], i[:-2]], axis=1)
    return [RegressorSample(d=float(d[k]), phi=phi[k], t=float(t[k + 2])) for k in range(n - 2)]


def regressor_matrix(t: np.ndarray, v: np.ndarray, i: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(times, d vector, phi matrix) for an exactly-gridded stream."""
    if len(t) < 3:
        return np.empty(0), np.empty(0), np.empty((0, 4))
    d = v[2:] - v[1:-1]
    phi = np.stack([v[1:-1] - v[:-2], i[2:], i[1:-1], i[:-2]], axis=1)
    return t[2:], d, phi


def decimate(trace: SimTrace, factor: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Every factor-th point of a trace as (t, V, I); instantaneous sampling.

    No anti-alias filtering: the regression is derived from the ZOH model,
    so point sampling is the faithful reduction. The tail that does not fill
    a whole stride is dropped.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise InvalidFactorError(f"factor must be a positive integer, got {factor!r}")
    return trace.time[::factor], trace.voltage[::factor], trace.current[::factor]
