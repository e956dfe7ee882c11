"""Model posterior probabilities, selection and combination across detectors.

Candidate segmentations (typically the outputs of several detectors, possibly
for several AR orders) are compared through their MDL marginal likelihoods
under a uniform prior over candidates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bayes import (
    FutureBreakPrior,
    NigPosterior,
    build_future_break_prior,
    future_break_draw,
    simulate_ar_paths,
)
from .detect import LOCAL_METHODS, DetectorConfig, Method, MethodResult, detect
from .exceptions import BreakscopeError, DataError, InvalidSegmentationError, SingularSegmentError
from .mdl import calibrate, mdl_marginal_loglik
from .segstats import Segmentation, TimeSeriesDataset, build_ar_dataset, segment_stats

__all__ = [
    "posterior_probabilities",
    "ModelEnsemble",
    "sel",
    "WeightedDraws",
    "mixture_parameter_density",
    "predictive_draws",
    "predictive_mean",
    "combined_predictive",
    "ForecastReport",
    "forecast_harness",
]

logger = logging.getLogger(__name__)


def posterior_probabilities(log_ml) -> np.ndarray:
    """Softmax of log marginal likelihoods (uniform prior over candidates).

    ``-inf`` entries get probability zero.  Raises ``ValueError`` for an empty
    input, NaN or ``+inf`` entries, or when every entry is ``-inf``.
    """
    x = np.asarray(log_ml, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("need at least one candidate")
    if np.any(np.isnan(x)) or np.any(x == np.inf):
        raise ValueError("log marginal likelihoods must be finite or -inf")
    top = x.max()
    if top == -np.inf:
        raise ValueError("all candidates are degenerate (log marginal likelihood -inf)")
    w = np.exp(x - top)
    return w / w.sum()


@dataclass
class ModelEnsemble:
    """Competing candidates with their log marginal likelihoods and posteriors."""

    candidates: list
    log_ml: np.ndarray
    posterior: np.ndarray
    labels: list = field(default_factory=list)

    @classmethod
    def from_results(cls, results: Sequence[MethodResult], labels=None) -> "ModelEnsemble":
        log_ml = np.array([r.score.value for r in results], dtype=float)
        labels = list(labels) if labels is not None else [r.method_id.value for r in results]
        return cls(list(results), log_ml, posterior_probabilities(log_ml), labels)

    def best(self) -> int:
        return int(np.argmax(self.posterior))


def _canonical(methods) -> list[Method]:
    order = list(Method)
    return sorted({Method.parse(m) for m in methods}, key=order.index)


def sel(ds: TimeSeriesDataset, cfg: DetectorConfig | None = None, methods=LOCAL_METHODS) -> MethodResult:
    """Run several detectors and keep the segmentation with the largest posterior.

    Ties go to the earliest method in the canonical order.  The returned
    result carries the per-method posteriors in ``diagnostics["sel"]``.
    """
    methods = _canonical(methods)
    if not methods:
        raise ValueError("sel needs at least one method")
    results = [detect(ds, m, cfg) for m in methods]
    try:
        ens = ModelEnsemble.from_results(results)
    except ValueError as exc:
        raise BreakscopeError("every detector returned a degenerate segmentation") from exc
    chosen = results[ens.best()]
    diag = dict(chosen.diagnostics)
    diag["sel"] = {
        "chosen": chosen.method_id.value,
        "posterior": {m.value: float(p) for m, p in zip(methods, ens.posterior)},
        "log_ml": {m.value: float(v) for m, v in zip(methods, ens.log_ml)},
        "breaks": {m.value: list(r.breaks) for m, r in zip(methods, results)},
    }
    total_ms = sum(r.runtime_ms or 0.0 for r in results)
    return MethodResult(chosen.method_id, chosen.segmentation, chosen.score, total_ms, diag, chosen.regime_params)


@dataclass
class WeightedDraws:
    """Draws stacked over candidates, each row carrying a mixture weight.

    The weights of candidate ``p`` sum to its posterior probability, so the
    total weight is one.
    """

    values: np.ndarray
    weights: np.ndarray
    source: np.ndarray

    def mean(self) -> np.ndarray:
        return np.average(self.values, axis=0, weights=self.weights)

    def resample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(self.weights.shape[0], size=size, p=self.weights / self.weights.sum())
        return self.values[idx]


def _mix(posterior, draws) -> WeightedDraws:
    posterior = np.asarray(posterior, dtype=float)
    if len(draws) != posterior.shape[0] or any(d is None for d in draws):
        raise ValueError("every candidate needs a draw set")
    vals, w, src = [], [], []
    for p, (wp, d) in enumerate(zip(posterior, draws)):
        d = np.asarray(d, dtype=float)
        if d.shape[0] == 0:
            raise ValueError(f"candidate {p} has no draws")
        vals.append(d)
        w.append(np.full(d.shape[0], wp / d.shape[0]))
        src.append(np.full(d.shape[0], p))
    return WeightedDraws(np.concatenate(vals), np.concatenate(w), np.concatenate(src))


def mixture_parameter_density(ensemble: ModelEnsemble, t: int, draws_per_model) -> WeightedDraws:
    """Posterior of the parameters active at time ``t``, mixed over candidates.

    ``draws_per_model[p]`` holds candidate ``p``'s regime draws, either a
    2-d array for the regime containing ``t`` or a list indexed by regime.
    """
    picked = []
    for cand, d in zip(ensemble.candidates, draws_per_model):
        if isinstance(d, (list, tuple)):
            d = d[cand.segmentation.regime_of(t)]
        picked.append(d)
    return _mix(ensemble.posterior, picked)


def _history_and_posterior(ds: TimeSeriesDataset, seg: Segmentation):
    a, b = seg.segments[-1]
    st = segment_stats(ds, a, b)
    return NigPosterior.from_stats(st, calibrate(st, seg.m, ds.T, ds.K))


def _last_lags(ds: TimeSeriesDataset) -> np.ndarray:
    """Lags for the first out-of-sample step, oldest first, from an AR design."""
    p = ds.K - 1
    if p == 0:
        return np.zeros(0)
    return np.r_[ds.X[-1, 1:][::-1][1:], ds.y[-1]]


def predictive_draws(
    ds: TimeSeriesDataset,
    seg: Segmentation,
    h: int,
    n_draws: int,
    rng: np.random.Generator,
    future_break: bool = False,
) -> np.ndarray:
    """Iterated ``h``-step predictive paths from the terminal regime of an AR design.

    With ``future_break`` and at least two in-sample breaks the paths may
    switch to a regime drawn from the future-break prior.
    """
    if h < 1:
        raise ValueError("horizon must be >= 1")
    post = _history_and_posterior(ds, seg)
    beta, sigma2 = post.draw(rng, n_draws)
    history = _last_lags(ds)
    if future_break and seg.m >= 2:
        fb = build_future_break_prior(ds, seg)
        return future_break_draw(history, beta, sigma2, fb, h, rng)
    return simulate_ar_paths(history, beta, sigma2, h, rng)


def predictive_mean(
    ds: TimeSeriesDataset,
    seg: Segmentation,
    h: int,
    n_draws: int,
    rng: np.random.Generator,
    future_break: bool = False,
) -> np.ndarray:
    """Posterior predictive mean of the next ``h`` values.

    Given the regression coefficients the conditional mean path is the
    shock-free AR recursion, so only parameter uncertainty is simulated.
    This has the same expectation as averaging :func:`predictive_draws` with
    far less Monte Carlo noise.
    """
    if h < 1:
        raise ValueError("horizon must be >= 1")
    post = _history_and_posterior(ds, seg)
    beta, _ = post.draw(rng, n_draws)
    history = _last_lags(ds)
    zero = np.zeros(beta.shape[0])
    switch = None
    if future_break and seg.m >= 2:
        fb = build_future_break_prior(ds, seg)
        delay = rng.geometric(fb.geom_rate, size=zero.size) if fb.geom_rate > 0 else np.full(zero.size, h)
        beta_new, _ = fb.draw_regime(rng, zero.size)
        switch = (delay, beta_new, zero)
    return simulate_ar_paths(history, beta, zero, h, rng, switch=switch).mean(axis=0)


def combined_predictive(ensemble: ModelEnsemble, h: int, draws) -> WeightedDraws:
    """Posterior-weighted mixture of per-candidate predictive path draws.

    ``draws[p]`` is an ``(n_p, h)`` array of candidate ``p``'s paths; the
    point forecast is :meth:`WeightedDraws.mean`.
    """
    if h < 1:
        raise ValueError("horizon must be >= 1")
    for d in draws:
        if np.asarray(d).shape[-1] < h:
            raise ValueError("draw sets shorter than the horizon")
    return _mix(ensemble.posterior, [np.asarray(d)[:, :h] for d in draws])


# ---------------------------------------------------------------------------
# expanding-window forecasting


@dataclass
class ForecastReport:
    """Forecast losses per model and horizon.

    ``forecasts[model]`` is an ``(n_origins, n_horizons)`` array of point
    forecasts (NaN where the target lies beyond the sample).
    """

    models: list
    horizons: tuple
    origins: np.ndarray
    forecasts: dict
    actuals: np.ndarray
    skipped: list = field(default_factory=list)

    def errors(self, model: str) -> np.ndarray:
        return self.forecasts[model] - self.actuals

    def rmsfe(self, model: str, h: int) -> float:
        e = self.errors(model)[:, self.horizons.index(h)]
        return float(np.sqrt(np.nanmean(e**2)))

    def mafe(self, model: str, h: int) -> float:
        e = self.errors(model)[:, self.horizons.index(h)]
        return float(np.nanmean(np.abs(e)))

    def table(self) -> dict:
        return {
            m: {str(h): {"rmsfe": self.rmsfe(m, h), "mafe": self.mafe(m, h)} for h in self.horizons}
            for m in self.models
        }

    def loss_rows(self) -> tuple[list[str], list[list]]:
        """Header and rows of squared errors, one row per origin (1-based), one column per model and horizon."""
        header = ["origin"] + [f"{m}|h={h}" for m in self.models for h in self.horizons]
        rows = []
        for i, t in enumerate(self.origins):
            row = [int(t)]
            for m in self.models:
                row += [float(v) for v in self.errors(m)[i] ** 2]
            rows.append(row)
        return header, rows


def _window_datasets(y: np.ndarray, n: int, orders, pmax: int):
    """AR datasets on ``y[:n]`` sharing the dependent rows ``pmax..n-1``."""
    return {p: build_ar_dataset(y[pmax - p : n], p) for p in orders}


def forecast_harness(
    series,
    ar_orders: Sequence[int] = (1, 2),
    methods=(Method.BSMDL, Method.WBSMDL, Method.PGMDL),
    horizons: Sequence[int] = (1, 3, 6, 12),
    start_frac: float = 0.1,
    future_break: bool = False,
    n_draws: int = 200,
    refit_every: int = 1,
    seed=0,
    cfg: DetectorConfig | None = None,
) -> ForecastReport:
    """Expanding-window out-of-sample evaluation of combined detector forecasts.

    At each origin the AR datasets for every order share the same effective
    sample.  Each (order, method) pair is a candidate; posterior weights are
    computed jointly over all pairs.  Reported models:

    ``AR(p)``
        single-regime AR(p).
    ``AR(p)-Local``
        combination of the detectors at order ``p``.
    ``Local``
        joint combination over orders and detectors.
    ``Local-FB``
        as ``Local`` with the future-break prior (when ``future_break``).

    Detectors are rerun every ``refit_every`` origins; in between the latest
    break dates are kept and rescored on the longer sample.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise DataError("series must be a finite one-dimensional array")
    orders = sorted({int(p) for p in ar_orders})
    if not orders or orders[0] < 1:
        raise ValueError("AR orders must be >= 1")
    horizons = tuple(sorted({int(h) for h in horizons}))
    if not horizons or horizons[0] < 1:
        raise ValueError("horizons must be >= 1")
    if not 0.0 < start_frac < 1.0:
        raise ValueError("start_frac must lie in (0, 1)")
    if refit_every < 1 or n_draws < 1:
        raise ValueError("refit_every and n_draws must be >= 1")
    methods = _canonical(methods)
    pmax = max(orders)
    N = y.shape[0]
    first = max(int(math.ceil(start_frac * N)), 10 * (pmax + 1) + pmax)
    if first >= N:
        raise DataError(f"series of length {N} too short for the first window")
    cfg = cfg or DetectorConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    H = max(horizons)
    hidx = np.array(horizons) - 1

    models = [f"AR({p})" for p in orders] + [f"AR({p})-Local" for p in orders] + ["Local"]
    if future_break:
        models.append("Local-FB")
    origins = np.arange(first, N)
    fc = {m: np.full((origins.size, len(horizons)), np.nan) for m in models}
    actual = np.full((origins.size, len(horizons)), np.nan)
    skipped = []
    breaks: dict = {}

    for i, n in enumerate(origins):
        tgt = n - 1 + np.array(horizons)
        ok = tgt < N
        actual[i, ok] = y[tgt[ok]]
        window = y[:n]
        if np.ptp(window) == 0.0:
            # a constant history has a point-mass predictive at its value
            for m in models:
                fc[m][i] = window[-1]
            continue
        try:
            dss = _window_datasets(y, n, orders, pmax)
            refit = (i % refit_every == 0) or not breaks
            cands, labels = [], []
            for p in orders:
                ds = dss[p]
                for meth in methods:
                    if refit:
                        res = detect(ds, meth, cfg)
                        breaks[(p, meth)] = res.breaks
                    seg = Segmentation(breaks[(p, meth)], ds.T)
                    try:
                        val = mdl_marginal_loglik(ds, seg, 1).value
                    except (InvalidSegmentationError, SingularSegmentError):
                        val = -math.inf
                    cands.append((p, seg, val))
                    labels.append((p, meth))
            for p in orders:
                ds = dss[p]
                fc[f"AR({p})"][i] = predictive_mean(ds, Segmentation((), ds.T), H, n_draws, rng)[hidx]

            means, means_fb = [], []
            for p, seg, val in cands:
                if not math.isfinite(val):
                    means.append(None)
                    means_fb.append(None)
                    continue
                ds = dss[p]
                means.append(predictive_mean(ds, seg, H, n_draws, rng))
                if future_break:
                    means_fb.append(predictive_mean(ds, seg, H, n_draws, rng, future_break=True))
            logml = np.array([c[2] for c in cands])
            w_all = posterior_probabilities(logml)
            fc["Local"][i] = _weighted_point(w_all, means)[hidx]
            if future_break:
                fc["Local-FB"][i] = _weighted_point(w_all, means_fb)[hidx]
            for p in orders:
                sel_p = np.array([lab[0] == p for lab in labels])
                w_p = posterior_probabilities(np.where(sel_p, logml, -np.inf))
                fc[f"AR({p})-Local"][i] = _weighted_point(w_p, means)[hidx]
        except (SingularSegmentError, InvalidSegmentationError, ValueError) as exc:
            logger.warning("origin %d skipped: %s", n, exc)
            skipped.append(int(n))
            for m in models:
                fc[m][i] = np.nan
    keep = ~np.isin(origins, skipped)
    return ForecastReport(
        models,
        horizons,
        origins[keep],
        {m: v[keep] for m, v in fc.items()},
        actual[keep],
        skipped,
    )


def _weighted_point(w, means) -> np.ndarray:
    """Weighted average of per-candidate predictive means (mixture mean)."""
    acc = None
    for wp, mu in zip(w, means):
        if wp == 0.0:
            continue
        if mu is None:
            raise ValueError("positive weight on a candidate without draws")
        acc = wp * mu if acc is None else acc + wp * mu
    return acc
