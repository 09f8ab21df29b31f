"""Analytic histogram simulator for single-photon lidar with detector dead time.

The package models per-bin detection as a Markov renewal process on the
histogram bins: a transition operator over landing bins, closed-form
holding-time moments between registrations, and a Gaussian law for the
total registered count over a fixed exposure. A sequential per-photon
simulator with an explicit dead-time scan is bundled as the gold-standard
reference, together with Poisson and rate-thinning baselines, metrics, and
a small CLI.
"""

from .config import (FluxVector, SystemConfig, config_from_dict, config_to_dict,
                     cumulative_flux, dead_time_shift, discretize_flux, flux_at,
                     load_config)
from .countlaw import (CountLaw, HoldingMoments, MomentKernels, build_kernels,
                       count_law, effective_mean, effective_variance,
                       holding_moment, lag_covariance, lag_covariances,
                       qmu2_right, qmu_left, qmu_right, qsigma2_right,
                       spectral_tail, steady_state_variance, wrap_constant)
from .errors import (ConfigError, ConsistencyError, ConvergenceError,
                     DomainError, FingerprintError, FormatError, LockError,
                     RangeError, SimError)
from .oracle import (EmpiricalLaw, RegistrationTrace, empirical_law,
                     poisson_simulate, renewal_law, sequential_simulate)
from .synth import (HistogramCube, LookupTable, Scene, build_lut, lookup,
                    sample_counts, sample_histogram, shift_pdf, simulate_cube,
                    simulate_pixel, uniform_scene)
from .transition import (EigenData, TemporalPdf, TransitionOperator,
                         build_transition, dump_operator, leading_eigenpairs,
                         left_apply, right_apply, stationary_pdf, to_dense)

__version__ = "0.1.0"

__all__ = [
    "SystemConfig", "FluxVector", "flux_at", "cumulative_flux",
    "discretize_flux", "dead_time_shift", "config_from_dict", "config_to_dict",
    "load_config",
    "TransitionOperator", "TemporalPdf", "EigenData", "build_transition",
    "right_apply", "left_apply", "to_dense", "stationary_pdf",
    "leading_eigenpairs", "dump_operator",
    "HoldingMoments", "MomentKernels", "CountLaw", "wrap_constant",
    "holding_moment", "build_kernels", "qmu_right", "qmu2_right",
    "qsigma2_right", "qmu_left", "effective_mean", "steady_state_variance",
    "lag_covariance", "lag_covariances", "spectral_tail", "effective_variance",
    "count_law",
    "sample_counts", "sample_histogram", "shift_pdf", "simulate_pixel",
    "LookupTable", "build_lut", "lookup", "Scene", "uniform_scene",
    "HistogramCube", "simulate_cube",
    "sequential_simulate", "poisson_simulate", "renewal_law",
    "RegistrationTrace", "EmpiricalLaw", "empirical_law",
    "SimError", "ConfigError", "DomainError", "ConvergenceError",
    "ConsistencyError", "FingerprintError", "RangeError", "FormatError",
    "LockError",
]
