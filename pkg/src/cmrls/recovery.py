"""Map identified regression coefficients back to physical battery quantities.

Given theta = [a2, a3, a4, a5] at timestep dt:

    r0  = a3
    tau = -dt / ln(a2)                 (a2 must lie in (0, 1))
    w   = beta1*dt/cap                 = (a3 + a4 + a5) / (1 - a2)
    u   = r1*(1 - a2)                  = a4 - w + a3*(1 + a2)
    r1  = u / (1 - a2),  c1 = tau / r1,  slope_over_cap = w / dt

beta1 and cap only ever enter the coefficients as the product beta1*dt/cap,
so they are reported as the ratio beta1/cap; splitting it requires declaring
one of the two as known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ecm import EcmParams

FIELDS = ("r0", "tau", "r1", "c1", "slope_over_cap")

# reason codes for invalid fields
A2_OUT_OF_RANGE = "a2_out_of_range"
A2_AT_ONE = "a2_at_one"
NONPOSITIVE_R1 = "nonpositive_r1"


class EmptySeriesError(ValueError):
    """No valid estimates remain after burn-in."""


@dataclass(frozen=True)
class PhysicalEstimate:
    r0: float
    tau: float
    r1: float
    c1: float
    slope_over_cap: float
    valid: dict[str, bool] = field(default_factory=dict)
    reasons: dict[str, str] = field(default_factory=dict)

    def value(self, name: str) -> float:
        return getattr(self, name)


def params_from_theta(theta: np.ndarray, dt: float) -> PhysicalEstimate:
    """Invert the coefficient map; fields that cannot be recovered are flagged.

    r0 depends only on a3 and survives any a2 degeneracy.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a2, a3, a4, a5 = (float(x) for x in theta)
    valid = {f: True for f in FIELDS}
    reasons: dict[str, str] = {}
    tau = r1 = c1 = soc_slope = math.nan

    a2_ok = 0.0 < a2 < 1.0 and np.isfinite(a2)
    near_one = abs(1.0 - a2) < 1e-12
    if not a2_ok or near_one:
        reason = A2_AT_ONE if near_one else A2_OUT_OF_RANGE
        for f in ("tau", "r1", "c1", "slope_over_cap"):
            valid[f] = False
            reasons[f] = reason
    else:
        tau = -dt / math.log(a2)
        w = (a3 + a4 + a5) / (1.0 - a2)
        u = a4 - w + a3 * (1.0 + a2)
        r1 = u / (1.0 - a2)
        soc_slope = w / dt
        if r1 <= 0 or not np.isfinite(r1):
            valid["r1"] = False
            valid["c1"] = False
            reasons["r1"] = NONPOSITIVE_R1
            reasons["c1"] = NONPOSITIVE_R1
            r1 = c1 = math.nan
        else:
            c1 = tau / r1
    return PhysicalEstimate(
        r0=a3, tau=tau, r1=r1, c1=c1, slope_over_cap=soc_slope,
        valid=valid, reasons=reasons,
    )


def true_values(params: EcmParams) -> dict[str, float]:
    return {
        "r0": params.r0,
        "tau": params.r1 * params.c1,
        "r1": params.r1,
        "c1": params.c1,
        "slope_over_cap": params.beta1 / params.cap,
    }


def mean_abs_error(series: list[PhysicalEstimate], truth: EcmParams,
                   burn_in_frac: float = 0.1) -> dict[str, dict[str, float | None]]:
    """Per-field mean identified value, mean absolute error and valid fraction.

    The first burn_in_frac of the series is dropped before averaging;
    invalid entries are excluded from the mean/MAE but counted in the valid
    fraction denominator. Fields with no valid entries report None (which
    serializes as JSON null) rather than NaN.
    """
    if not 0.0 <= burn_in_frac < 1.0:
        raise ValueError("burn_in_frac must be in [0, 1)")
    start = int(len(series) * burn_in_frac)
    window = series[start:]
    if not window:
        raise EmptySeriesError("no estimates left after burn-in")
    truths = true_values(truth)
    table: dict[str, dict[str, float | None]] = {}
    for name in FIELDS:
        vals = np.array([e.value(name) for e in window if e.valid.get(name, False)])
        vals = vals[np.isfinite(vals)]
        entry: dict[str, float | None] = {
            "true": truths[name],
            "valid_fraction": len(vals) / len(window),
        }
        if len(vals):
            entry["mean"] = float(vals.mean())
            entry["mae"] = float(np.abs(vals - truths[name]).mean())
        else:
            entry["mean"] = None
            entry["mae"] = None
        table[name] = entry
    return table


def estimates_from_theta_series(theta: np.ndarray, dt: float) -> list[PhysicalEstimate]:
    """params_from_theta over the rows of an identification trace."""
    return [params_from_theta(row, dt) for row in theta]


def split_ratio_table(series: list[PhysicalEstimate], truth: EcmParams,
                      known_field: str, known_value: float,
                      burn_in_frac: float = 0.1) -> tuple[str, dict]:
    """Split slope_over_cap = beta1/cap using one declared-known factor.

    Returns (derived_field, stats): declaring beta1 yields cap estimates and
    vice versa. Entries where the slope is invalid or nonpositive are
    excluded, mirroring mean_abs_error's conventions.
    """
    if known_field not in ("beta1", "cap"):
        raise ValueError("known_field must be 'beta1' or 'cap'")
    if known_value <= 0:
        raise ValueError("known value must be positive")
    derived = "cap" if known_field == "beta1" else "beta1"
    true_value = truth.cap if derived == "cap" else truth.beta1
    start = int(len(series) * burn_in_frac)
    window = series[start:]
    if not window:
        raise EmptySeriesError("no estimates left after burn-in")
    vals = []
    for est in window:
        if not est.valid.get("slope_over_cap", False):
            continue
        slope = est.slope_over_cap
        if not np.isfinite(slope) or slope <= 0:
            continue
        vals.append(known_value / slope if derived == "cap" else slope * known_value)
    arr = np.array(vals)
    entry: dict = {
        "true": true_value,
        "valid_fraction": len(arr) / len(window),
        "known_field": known_field,
        "known_value": known_value,
    }
    if len(arr):
        entry["mean"] = float(arr.mean())
        entry["mae"] = float(np.abs(arr - true_value).mean())
    else:
        entry["mean"] = None
        entry["mae"] = None
    return derived, entry
