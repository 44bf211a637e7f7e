"""Gaussian message-passing detection for massive MU-MIMO uplinks.

The package provides the system model (random channels, Gaussian sources,
AWGN), five detectors behind one result contract (exact MMSE, plain and
relaxed message passing, Jacobi and Richardson baselines), closed-form
convergence analysis, and a Monte Carlo harness with a CLI.
"""

from .analysis import (
    AsymptoticParams,
    ConvergenceReport,
    check_mean_convergence,
    gamma_approx,
    gamma_empirical,
    gamma_value,
    gmpid_asymptotic_mse,
    gmpid_variance_fixed_point,
    iteration_matrix_extremes,
    load_guarantees_convergence,
    mmse_asymptotic_mse,
    mp_eigen_bounds,
    optimal_relaxation,
    predicted_radius,
    sagmpid_asymptotic_radius,
    spectral_radius,
)
from .detectors import (
    DETECTOR_NAMES,
    DegenerateInstanceError,
    DetectionResult,
    DetectorConfig,
    GMPIDetector,
    JacobiDetector,
    MMSEDetector,
    RichardsonDetector,
    SAGMPIDetector,
    gmpid_run,
    gmpid_sum_update,
    gmpid_var_update,
    jacobi_run,
    mmse_detect,
    richardson_run,
    run_detector,
    sagmpid_run,
)
from .harness import (
    ExperimentSpec,
    RegimeTable,
    SweepResult,
    bench_iteration,
    regime_table,
    run_experiment,
    trial_seed,
)
from .messages import MessageState, state_from_user_values
from .model import (
    Dimensions,
    SystemInstance,
    generate_channel,
    load_instance,
    make_instance,
    sample_sources,
    save_instance,
    transmit,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticParams",
    "ConvergenceReport",
    "DETECTOR_NAMES",
    "DegenerateInstanceError",
    "DetectionResult",
    "DetectorConfig",
    "Dimensions",
    "ExperimentSpec",
    "GMPIDetector",
    "JacobiDetector",
    "MMSEDetector",
    "MessageState",
    "RegimeTable",
    "RichardsonDetector",
    "SAGMPIDetector",
    "SweepResult",
    "SystemInstance",
    "bench_iteration",
    "check_mean_convergence",
    "gamma_approx",
    "gamma_empirical",
    "gamma_value",
    "generate_channel",
    "gmpid_asymptotic_mse",
    "gmpid_run",
    "gmpid_sum_update",
    "gmpid_var_update",
    "gmpid_variance_fixed_point",
    "iteration_matrix_extremes",
    "jacobi_run",
    "load_guarantees_convergence",
    "load_instance",
    "make_instance",
    "mmse_asymptotic_mse",
    "mmse_detect",
    "mp_eigen_bounds",
    "optimal_relaxation",
    "predicted_radius",
    "regime_table",
    "richardson_run",
    "run_detector",
    "run_experiment",
    "sagmpid_asymptotic_radius",
    "sagmpid_run",
    "sample_sources",
    "save_instance",
    "spectral_radius",
    "state_from_user_values",
    "transmit",
    "trial_seed",
]
