"""Change-point detection, selection and combination for piecewise linear regressions.

Segmentations are scored by an MDL criterion that coincides with the marginal
likelihood of a calibrated Normal-Inverse-Gamma prior, so detectors can be
compared and mixed through posterior probabilities.
"""

from __future__ import annotations

from .bayes import (
    BreakPrior,
    FutureBreakPrior,
    NigPosterior,
    build_break_prior,
    build_future_break_prior,
    credible_intervals,
    ddream_sample,
    future_break_draw,
    gibbs_segment_draw,
    log_posterior_tau,
)
from .detect import (
    DetectorConfig,
    Method,
    MethodResult,
    binary_segmentation,
    brute_force,
    bsmdl_statistic,
    cumsum_statistic,
    detect,
    gmdl,
    pgmdl,
    scan_candidates,
    wild_binary_segmentation,
)
from .estimators import ARBreakForecaster, BreakRegressor
from .exceptions import (
    BreakscopeError,
    ComputationGuardError,
    DataError,
    InvalidSegmentationError,
    SingularSegmentError,
)
from .mdl import MdlScore, calibrate, mdl_criterion, mdl_marginal_loglik, segment_log_marginal
from .segstats import Segmentation, TimeSeriesDataset, build_ar_dataset, build_dataset, segment_stats
from .select import (
    ModelEnsemble,
    combined_predictive,
    forecast_harness,
    mixture_parameter_density,
    posterior_probabilities,
    sel,
)
from .simlab import DGPS, DgpSpec, run_replications, simulate_dgp

__version__ = "0.1.0"

__all__ = [
    "ARBreakForecaster",
    "BreakPrior",
    "BreakRegressor",
    "BreakscopeError",
    "ComputationGuardError",
    "DGPS",
    "DataError",
    "DetectorConfig",
    "DgpSpec",
    "FutureBreakPrior",
    "InvalidSegmentationError",
    "MdlScore",
    "Method",
    "MethodResult",
    "ModelEnsemble",
    "NigPosterior",
    "Segmentation",
    "SingularSegmentError",
    "TimeSeriesDataset",
    "binary_segmentation",
    "brute_force",
    "bsmdl_statistic",
    "build_ar_dataset",
    "build_break_prior",
    "build_dataset",
    "build_future_break_prior",
    "calibrate",
    "combined_predictive",
    "credible_intervals",
    "cumsum_statistic",
    "ddream_sample",
    "detect",
    "forecast_harness",
    "future_break_draw",
    "gibbs_segment_draw",
    "gmdl",
    "log_posterior_tau",
    "mdl_criterion",
    "mdl_marginal_loglik",
    "mixture_parameter_density",
    "pgmdl",
    "posterior_probabilities",
    "run_replications",
    "scan_candidates",
    "segment_log_marginal",
    "segment_stats",
    "sel",
    "simulate_dgp",
    "wild_binary_segmentation",
]
