"""scikit-learn style wrappers around the detectors.

:class:`BreakRegressor` segments a linear regression ``y ~ 1 + X`` and
predicts with the terminal regime.  :class:`ARBreakForecaster` fits an AR(p)
with breaks using several detectors, weights them by posterior probability
and produces combined forecasts.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import add_intercept, check_random_state_seed, check_regression, check_series
from .detect import DetectorConfig, Method, detect
from .select import ModelEnsemble, combined_predictive, predictive_draws, sel
from .segstats import build_ar_dataset, build_dataset

__all__ = ["BreakRegressor", "ARBreakForecaster"]


class _DetectorParams:
    def _config(self, seed: int) -> DetectorConfig:
        return DetectorConfig(
            threshold_delta=self.threshold_delta,
            wbs_intervals=self.wbs_intervals,
            min_duration=self.min_duration,
            max_breaks=self.max_breaks,
            rng_seed=seed,
        )


class BreakRegressor(_DetectorParams, RegressorMixin, BaseEstimator):
    """Piecewise-linear regression with detected breaks.

    Parameters
    ----------
    method : str
        Detector name (``"bsmdl"``, ``"gmdl"``, ...) or ``"sel"``.
    threshold_delta, wbs_intervals, min_duration, max_breaks
        Passed to :class:`~breakscope.detect.DetectorConfig`.
    random_state : int or None

    Attributes
    ----------
    breaks_ : tuple of int
        1-based last observation of each non-terminal regime.
    coef_, intercept_ : terminal-regime OLS coefficients.
    segment_params_ : list of dict
    log_marginal_likelihood_ : float
    """

    def __init__(
        self,
        method="bsmdl",
        threshold_delta=3.0,
        wbs_intervals=1000,
        min_duration=None,
        max_breaks=50,
        random_state=0,
    ):
        self.method = method
        self.threshold_delta = threshold_delta
        self.wbs_intervals = wbs_intervals
        self.min_duration = min_duration
        self.max_breaks = max_breaks
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_regression(X, y)
        ds = build_dataset(y, add_intercept(X))
        cfg = self._config(check_random_state_seed(self.random_state))
        res = sel(ds, cfg) if str(self.method).lower() == "sel" else detect(ds, Method.parse(self.method), cfg)
        self.result_ = res
        self.breaks_ = res.breaks
        self.n_breaks_ = res.m
        self.segment_params_ = [dict(p) for p in res.regime_params]
        self.log_marginal_likelihood_ = res.score.value
        beta = res.regime_params[-1]["beta"] if res.regime_params else np.full(ds.K, np.nan)
        self.intercept_ = float(beta[0])
        self.coef_ = np.asarray(beta[1:])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Predictions from the terminal regime."""
        check_is_fitted(self, "coef_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.intercept_ + X @ self.coef_


class ARBreakForecaster(_DetectorParams, BaseEstimator):
    """AR(p) forecaster combining several detectors by posterior probability.

    Parameters
    ----------
    ar_order : int
    methods : sequence of str
    future_break : bool
        Let predictive paths cross one out-of-sample break.
    n_draws : int
        Predictive paths per candidate.

    Attributes
    ----------
    ensemble_ : ModelEnsemble
    posterior_ : dict mapping method name to posterior probability
    """

    def __init__(
        self,
        ar_order=1,
        methods=("bsmdl", "wbsmdl", "pgmdl"),
        future_break=False,
        n_draws=1000,
        threshold_delta=3.0,
        wbs_intervals=1000,
        min_duration=None,
        max_breaks=50,
        random_state=0,
    ):
        self.ar_order = ar_order
        self.methods = methods
        self.future_break = future_break
        self.n_draws = n_draws
        self.threshold_delta = threshold_delta
        self.wbs_intervals = wbs_intervals
        self.min_duration = min_duration
        self.max_breaks = max_breaks
        self.random_state = random_state

    def fit(self, y, X=None):
        y = check_series(y, min_length=self.ar_order + 2)
        self.seed_ = check_random_state_seed(self.random_state)
        self.dataset_ = build_ar_dataset(y, self.ar_order)
        cfg = self._config(self.seed_)
        results = [detect(self.dataset_, Method.parse(m), cfg) for m in self.methods]
        self.ensemble_ = ModelEnsemble.from_results(results)
        self.posterior_ = dict(zip(self.ensemble_.labels, self.ensemble_.posterior.tolist()))
        return self

    def predictive(self, h: int):
        """Posterior-weighted predictive path draws for ``h`` steps."""
        check_is_fitted(self, "ensemble_")
        rng = np.random.default_rng([self.seed_, h])
        draws = [
            predictive_draws(self.dataset_, r.segmentation, h, self.n_draws, rng, self.future_break)
            for r in self.ensemble_.candidates
        ]
        return combined_predictive(self.ensemble_, h, draws)

    def forecast(self, h: int = 1) -> np.ndarray:
        """Predictive means of ``y_{T+1}, ..., y_{T+h}``."""
        return self.predictive(h).mean()

    def predict(self, h: int = 1) -> np.ndarray:
        return self.forecast(h)
