"""Over-dispersion-aware chi-square and CMH scans for allele-frequency change.

Classical chi-square/CMH tests assume a single binomial sampling step;
time-series data from evolution experiments carries extra variance from
genetic drift and pool sequencing, which makes those tests reject far too
often.  This package computes adapted statistics whose denominators use
variance estimators matched to the actual sampling scenario, keeping the
chi-square(1) null calibration while staying fast enough for genome-wide
scans.
"""

from .correction import TailCorrection, benjamini_hochberg, fit_beta_moments
from .errors import (
    DegenerateMarginError,
    DegenerateMomentsError,
    DriftscanError,
    InsufficientTailError,
    NotPolymorphicError,
    ScenarioMismatchError,
    SyncParseError,
    ZeroDenominatorError,
)
from .scan import FrequencyScan, ScanResult, scan_counts, zero_adjust_counts
from .simulate import (
    SimConfig,
    SimData,
    empirical_fdr_cutoff,
    sample_and_pool,
    simulate_experiment,
    simulate_trajectory,
    step_selection,
)
from .stats import chi2_sf, chi_square, chi_square_adapted, cmh, cmh_adapted
from .tables import CountTable, LocusFlag, Trajectory, TwoStepTable
from .variances import (
    SamplingModel,
    Scenario,
    drift_variance,
    estimate_variances,
    mean_frequency,
    drift_variance_estimate,
    mean_frequency_timeseries,
    drift_variance_timeseries,
)

__version__ = "0.1.0"

__all__ = [
    "FrequencyScan",
    "ScanResult",
    "scan_counts",
    "zero_adjust_counts",
    "TailCorrection",
    "benjamini_hochberg",
    "fit_beta_moments",
    "chi_square",
    "chi_square_adapted",
    "cmh",
    "cmh_adapted",
    "chi2_sf",
    "CountTable",
    "TwoStepTable",
    "Trajectory",
    "LocusFlag",
    "SamplingModel",
    "Scenario",
    "drift_variance",
    "drift_variance_estimate",
    "drift_variance_timeseries",
    "mean_frequency",
    "mean_frequency_timeseries",
    "estimate_variances",
    "SimConfig",
    "SimData",
    "simulate_experiment",
    "simulate_trajectory",
    "step_selection",
    "sample_and_pool",
    "empirical_fdr_cutoff",
    "DriftscanError",
    "DegenerateMarginError",
    "ZeroDenominatorError",
    "ScenarioMismatchError",
    "NotPolymorphicError",
    "DegenerateMomentsError",
    "InsufficientTailError",
    "SyncParseError",
]
