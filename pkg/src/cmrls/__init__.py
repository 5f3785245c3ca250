"""Online Li-ion battery parameter identification.

A 1RC equivalent-circuit simulator, forgetting-factor recursive least
squares, and a condition-memory variant that monitors the covariance
condition number without matrix inversion, plus a benchmark harness,
HTTP service and CLI.
"""

from .ecm import EcmParams, EcmState, PulseConfig, discretize, gen_random_pulse, simulate, theta_from_params
from .estimators import (CmrlsConfig, InitConfig, batch_wls, cmrls_step,
                         rls_init, rls_step, run_identification,
                         tracked_condition)
from .recovery import mean_abs_error, params_from_theta

__version__ = "0.1.0"

__all__ = [
    "EcmParams", "EcmState", "PulseConfig", "discretize", "gen_random_pulse",
    "simulate", "theta_from_params",
    "CmrlsConfig", "InitConfig", "batch_wls", "cmrls_step", "rls_init",
    "rls_step", "run_identification", "tracked_condition",
    "mean_abs_error", "params_from_theta",
    "__version__",
]
