"""Bayesian inference conditional on a detected number of breaks.

* :class:`NigPosterior` and :func:`gibbs_segment_draw` sample regime
  parameters from the conjugate posterior of the calibrated g-prior.
* :func:`build_break_prior` and :func:`log_posterior_tau` define a posterior
  over break dates that is centred on a detector's estimate.
* :func:`ddream_sample` explores that posterior with a discrete
  differential-evolution Metropolis sampler running several coupled chains.
* :class:`FutureBreakPrior` and :func:`future_break_draw` simulate predictive
  paths that may cross one out-of-sample break.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from .exceptions import BreakscopeError, InvalidSegmentationError, SingularSegmentError
from .mdl import CalibratedPrior, calibrate, default_min_duration, mdl_marginal_loglik
from .segstats import Segmentation, SegmentStats, TimeSeriesDataset, segment_stats

__all__ = [
    "NigPosterior",
    "gibbs_segment_draw",
    "BreakPrior",
    "build_break_prior",
    "log_posterior_tau",
    "DreamResult",
    "ddream_gamma",
    "ddream_sample",
    "parameter_draws",
    "FutureBreakPrior",
    "build_future_break_prior",
    "simulate_ar_paths",
    "future_break_draw",
    "weighted_quantile",
    "credible_intervals",
]

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# conjugate regime posterior


@dataclass(frozen=True)
class NigPosterior:
    """Normal-Inverse-Gamma posterior of one regime.

    ``sigma2 ~ IG(nu_bar/2, s_bar/2)`` and
    ``beta | sigma2 ~ N(beta_bar, sigma2 * scale_matrix)``.
    """

    nu_bar: float
    s_bar: float
    beta_bar: np.ndarray
    scale_matrix: np.ndarray

    @classmethod
    def from_stats(cls, stats: SegmentStats, prior: CalibratedPrior) -> "NigPosterior":
        shrink = prior.g_under / (1.0 + prior.g_under)
        try:
            scale = shrink * np.linalg.inv(stats.xtx)
        except np.linalg.LinAlgError as exc:
            raise SingularSegmentError("segment design is singular") from exc
        return cls(
            nu_bar=stats.n + prior.nu_under,
            s_bar=prior.s_under + stats.ssr,
            beta_bar=np.array(stats.beta_hat, dtype=float),
            scale_matrix=scale,
        )

    @property
    def sigma2_mean(self) -> float:
        return self.s_bar / (self.nu_bar - 2.0)

    def draw(self, rng: np.random.Generator, size: int | None = None):
        """Joint draws; returns ``(beta, sigma2)`` with shapes ``(size, K)`` and ``(size,)``."""
        n = 1 if size is None else int(size)
        try:
            L = np.linalg.cholesky(self.scale_matrix)
        except np.linalg.LinAlgError as exc:
            raise SingularSegmentError("posterior scale matrix is not positive definite") from exc
        sigma2 = (0.5 * self.s_bar) / rng.gamma(0.5 * self.nu_bar, 1.0, size=n)
        z = rng.standard_normal((n, self.beta_bar.shape[0]))
        beta = self.beta_bar + np.sqrt(sigma2)[:, None] * (z @ L.T)
        if size is None:
            return beta[0], float(sigma2[0])
        return beta, sigma2


def gibbs_segment_draw(stats: SegmentStats, prior: CalibratedPrior, rng: np.random.Generator, size: int | None = None):
    """Draw ``sigma2`` then ``beta | sigma2`` from the regime posterior."""
    return NigPosterior.from_stats(stats, prior).draw(rng, size)


# ---------------------------------------------------------------------------
# break-date prior and posterior


@dataclass(frozen=True)
class BreakPrior:
    """Independent truncated binomial priors on the break dates.

    Break ``i`` has pmf proportional to ``Binomial(r[i], e[i])`` on
    ``support_lo[i]..support_hi[i]``, the span between the midpoints to its
    neighbouring estimated breaks.
    """

    r: np.ndarray
    e: np.ndarray
    support_lo: np.ndarray
    support_hi: np.ndarray
    tau_hat: tuple[int, ...]
    T: int

    @property
    def m(self) -> int:
        return len(self.tau_hat)

    def log_pmf(self, tau) -> float:
        """Unnormalized log prior; ``-inf`` outside the supports."""
        tau = np.asarray(tau)
        if np.any(tau < self.support_lo) or np.any(tau > self.support_hi):
            return -math.inf
        return float(np.sum(binom.logpmf(tau, self.r, self.e)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Independent draws from each truncated marginal, shape ``(size, m)``."""
        out = np.empty((size, self.m), dtype=np.int64)
        for i in range(self.m):
            k = np.arange(self.support_lo[i], self.support_hi[i] + 1)
            p = np.exp(binom.logpmf(k, self.r[i], self.e[i]) - binom.logpmf(self.tau_hat[i], self.r[i], self.e[i]))
            out[:, i] = rng.choice(k, size=size, p=p / p.sum())
        return out


def build_break_prior(tau_hat: Segmentation) -> BreakPrior:
    """Calibrate ``r_i = floor((tau_i + tau_{i+1})/2)`` and ``e_i = tau_i / r_i``."""
    if tau_hat.m < 1:
        raise InvalidSegmentationError("a break prior needs at least one break")
    b = np.array(tau_hat.bounds, dtype=np.int64)
    r = (b[1:-1] + b[2:]) // 2
    e = b[1:-1] / r
    if np.any(e <= 0) or np.any(e >= 1):
        raise InvalidSegmentationError(f"breaks {tau_hat.tau} too close for a binomial prior (e={e.tolist()})")
    lo = -((-(b[:-2] + b[1:-1])) // 2)
    return BreakPrior(r, e, lo, r.copy(), tau_hat.tau, tau_hat.T)


def log_posterior_tau(
    ds: TimeSeriesDataset, tau_tilde, prior: BreakPrior, min_duration: int | None = None, cache: dict | None = None
) -> float:
    """Unnormalized log posterior of break dates: log marginal likelihood plus log prior.

    Returns ``-inf`` for dates outside the supports, unordered dates, regimes
    shorter than ``min_duration`` or singular regimes.
    """
    key = tuple(int(t) for t in tau_tilde)
    if cache is not None and key in cache:
        return cache[key]
    lp = prior.log_pmf(key)
    if math.isfinite(lp):
        try:
            seg = Segmentation(key, ds.T)
            lp += mdl_marginal_loglik(ds, seg, min_duration).value
        except (InvalidSegmentationError, SingularSegmentError):
            lp = -math.inf
    if cache is not None:
        cache[key] = lp
    return lp


# ---------------------------------------------------------------------------
# D-DREAM sampler


def ddream_gamma(delta: int, m: int) -> float:
    """Differential-evolution jump scale ``2.38 / sqrt(2 delta m)``."""
    return 2.38 / math.sqrt(2.0 * delta * m)


@dataclass
class DreamResult:
    """Pooled post-burn-in break-date draws.

    Attributes
    ----------
    draws : ndarray of shape (n_draws, m)
        Retained draws of all chains, chain-major within each kept iteration.
    chains : ndarray of shape (n_iter + 1, R, m)
        Full trajectories including the initial states.
    acceptance : ndarray of shape (R,)
        Per-chain acceptance rates over all iterations.
    """

    draws: np.ndarray
    log_post: np.ndarray
    chains: np.ndarray
    acceptance: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def pooled_acceptance(self) -> float:
        return float(np.mean(self.acceptance))


def _initial_states(ds, prior, R, rng, min_duration, cache):
    states = np.empty((R, prior.m), dtype=np.int64)
    for j in range(R):
        for _ in range(1000):
            cand = prior.sample(rng, 1)[0]
            if math.isfinite(log_posterior_tau(ds, cand, prior, min_duration, cache)):
                break
        else:
            cand = np.array(prior.tau_hat, dtype=np.int64)
        states[j] = cand
    return states


def ddream_sample(
    ds: TimeSeriesDataset,
    prior: BreakPrior,
    n_chains: int = 10,
    n_iter: int = 1000,
    burn_in: int | None = None,
    thin: int = 1,
    seed=0,
    min_duration: int | None = None,
    rw_prob: float = 0.1,
) -> DreamResult:
    """Sample break dates with discrete differential-evolution Metropolis moves.

    Each iteration updates the chains one at a time.  Chain ``j`` proposes
    ``tau_j + round(gamma (sum_g tau_{r1(g)} - sum_g tau_{r2(g)}) + xi)``
    using ``2 delta`` other chains, ``delta ~ U{1,2,3}`` and
    ``xi ~ N(0, 1e-4 I)``, and accepts with the posterior ratio.  With
    probability ``rw_prob`` the proposal is instead a symmetric integer
    random-walk step of one coordinate, which keeps the sampler irreducible
    when all chains coincide.  Set ``rw_prob=0`` for pure difference moves.

    Parameters
    ----------
    burn_in : int, optional
        Discarded iterations, default ``n_iter // 2``.
    thin : int
        Keep every ``thin``-th post-burn-in iteration.
    """
    if n_chains < 7:
        raise ValueError("D-DREAM needs at least 7 chains (2*delta + 1 with delta = 3)")
    if n_iter < 1 or thin < 1:
        raise ValueError("n_iter and thin must be >= 1")
    if not 0.0 <= rw_prob <= 1.0:
        raise ValueError("rw_prob must lie in [0, 1]")
    burn = n_iter // 2 if burn_in is None else int(burn_in)
    if not 0 <= burn < n_iter:
        raise ValueError("burn_in must lie in [0, n_iter)")
    m = prior.m
    if m < 1:
        raise ValueError("sampling break dates requires m >= 1")
    d = default_min_duration(ds.T, ds.K) if min_duration is None else int(min_duration)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cache: dict = {}

    R = n_chains
    x = _initial_states(ds, prior, R, rng, d, cache)
    lp = np.array([log_posterior_tau(ds, s, prior, d, cache) for s in x])
    chains = np.empty((n_iter + 1, R, m), dtype=np.int64)
    chains[0] = x
    accepted = np.zeros(R, dtype=np.int64)
    kept, kept_lp = [], []
    others = [np.array([k for k in range(R) if k != j]) for j in range(R)]

    for it in range(1, n_iter + 1):
        for j in range(R):
            if rng.random() < rw_prob:
                step = np.zeros(m, dtype=np.int64)
                step[rng.integers(m)] = rng.choice((-3, -2, -1, 1, 2, 3))
                z = x[j] + step
            else:
                delta = int(rng.integers(1, 4))
                idx = rng.choice(others[j], size=2 * delta, replace=False)
                diff = x[idx[:delta]].sum(axis=0) - x[idx[delta:]].sum(axis=0)
                xi = rng.normal(0.0, 0.01, size=m)
                z = x[j] + np.rint(ddream_gamma(delta, m) * diff + xi).astype(np.int64)
            lz = log_posterior_tau(ds, z, prior, d, cache)
            if math.isfinite(lz) and math.log(rng.random()) < lz - lp[j]:
                x[j] = z
                lp[j] = lz
                accepted[j] += 1
        chains[it] = x
        if it > burn and (it - burn) % thin == 0:
            kept.append(x.copy())
            kept_lp.append(lp.copy())

    draws = np.concatenate(kept) if kept else np.empty((0, m), dtype=np.int64)
    if np.any(draws < prior.support_lo) or np.any(draws > prior.support_hi):
        raise BreakscopeError("retained draw outside the prior support")
    acc = accepted / n_iter
    if not 0.05 <= acc.mean() <= 0.7:
        logger.warning("pooled D-DREAM acceptance rate %.3f outside [0.05, 0.7]", acc.mean())
    cfg = {"n_chains": R, "n_iter": n_iter, "burn_in": burn, "thin": thin, "rw_prob": rw_prob, "min_duration": d}
    return DreamResult(draws, np.concatenate(kept_lp) if kept_lp else np.empty(0), chains, acc, cfg)


def parameter_draws(ds: TimeSeriesDataset, tau_draws, rng: np.random.Generator, min_duration: int | None = None):
    """One conjugate draw of every regime's ``(beta, sigma2)`` per break-date draw.

    Returns arrays of shape ``(N, m+1, K)`` and ``(N, m+1)``.
    """
    tau_draws = np.atleast_2d(np.asarray(tau_draws, dtype=np.int64))
    N, m = tau_draws.shape
    betas = np.empty((N, m + 1, ds.K))
    sig = np.empty((N, m + 1))
    post_cache: dict = {}
    for i, tau in enumerate(tau_draws):
        seg = Segmentation(tuple(tau), ds.T)
        if min_duration is not None:
            seg.check_min_duration(min_duration)
        for k, (a, b) in enumerate(seg.segments):
            post = post_cache.get((a, b))
            if post is None:
                st = segment_stats(ds, a, b)
                post = post_cache[(a, b)] = NigPosterior.from_stats(st, calibrate(st, m, ds.T, ds.K))
            betas[i, k], sig[i, k] = post.draw(rng)
    return betas, sig


# ---------------------------------------------------------------------------
# out-of-sample break


@dataclass(frozen=True)
class FutureBreakPrior:
    """Hierarchical prior for one break after the end of the sample.

    The break occurs ``Geometric(geom_rate)`` steps after ``T``; the new
    regime draws ``beta ~ N(beta_mean, beta_cov)`` and
    ``sigma2 ~ IG(sigma2_shape, sigma2_scale)``.
    """

    geom_rate: float
    beta_mean: np.ndarray
    beta_cov: np.ndarray
    sigma2_shape: float
    sigma2_scale: float

    def draw_regime(self, rng: np.random.Generator, size: int):
        beta = rng.multivariate_normal(self.beta_mean, self.beta_cov, size=size, method="cholesky")
        sigma2 = self.sigma2_scale / rng.gamma(self.sigma2_shape, 1.0, size=size)
        return beta, sigma2

    def prob_break_within(self, h: int) -> float:
        return 1.0 - (1.0 - self.geom_rate) ** h


def build_future_break_prior(ds: TimeSeriesDataset, seg: Segmentation) -> FutureBreakPrior:
    """Rate ``m/T``, coefficients centred on the average regime OLS estimate.

    The coefficient covariance is diagonal with the across-regime sample
    variances (``ddof=1``); the variance prior has shape ``T/2`` and scale
    half the mean regime SSR.
    """
    if seg.m < 2:
        raise InvalidSegmentationError("the future-break prior needs at least two in-sample breaks")
    stats = [segment_stats(ds, a, b) for a, b in seg.segments]
    B = np.array([st.beta_hat for st in stats])
    ssr = np.array([st.ssr for st in stats])
    return FutureBreakPrior(
        geom_rate=seg.m / ds.T,
        beta_mean=B.mean(axis=0),
        beta_cov=np.diag(B.var(axis=0, ddof=1)),
        sigma2_shape=ds.T / 2.0,
        sigma2_scale=float(ssr.mean()) / 2.0,
    )


def simulate_ar_paths(history, beta, sigma2, h: int, rng: np.random.Generator, switch=None) -> np.ndarray:
    """Iterate ``y = beta_0 + sum_k beta_k y_{-k} + sigma eps`` for ``h`` steps per draw.

    Parameters
    ----------
    history : array_like
        Most recent observations, oldest first; at least ``K - 1`` values.
    beta, sigma2 : ndarray of shape (N, K) and (N,)
    switch : tuple, optional
        ``(break_step, beta_new, sigma2_new)``: draws use the new parameters
        for steps ``j > break_step[n]`` (1-based).
    """
    if h < 1:
        raise ValueError("horizon must be >= 1")
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    sigma2 = np.asarray(sigma2, dtype=float).reshape(-1)
    N, K = beta.shape
    p = K - 1
    hist = np.asarray(history, dtype=float)
    if hist.shape[0] < p:
        raise ValueError(f"need {p} lagged values, got {hist.shape[0]}")
    lags = np.tile(hist[::-1][:p], (N, 1)) if p else np.zeros((N, 0))
    eps = rng.standard_normal((N, h))
    out = np.empty((N, h))
    for j in range(h):
        b, s2 = beta, sigma2
        if switch is not None:
            post = switch[0] < j + 1
            b = np.where(post[:, None], switch[1], beta)
            s2 = np.where(post, switch[2], sigma2)
        yj = b[:, 0] + np.einsum("nk,nk->n", b[:, 1:], lags) + np.sqrt(s2) * eps[:, j]
        out[:, j] = yj
        if p:
            lags = np.concatenate([yj[:, None], lags[:, :-1]], axis=1)
    return out


def future_break_draw(history, beta, sigma2, fb: FutureBreakPrior, h: int, rng: np.random.Generator) -> np.ndarray:
    """Predictive paths that switch to a freshly drawn regime after a geometric delay."""
    beta = np.atleast_2d(beta)
    N = beta.shape[0]
    delay = rng.geometric(fb.geom_rate, size=N) if fb.geom_rate > 0 else np.full(N, np.iinfo(np.int64).max)
    beta_new, sigma2_new = fb.draw_regime(rng, N)
    return simulate_ar_paths(history, beta, sigma2, h, rng, switch=(delay, beta_new, sigma2_new))


# ---------------------------------------------------------------------------
# summaries


def weighted_quantile(values, q, weights=None) -> np.ndarray:
    """Inverse weighted CDF: smallest value whose cumulative weight reaches ``q``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no draws")
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cdf = np.cumsum(w) / w.sum()
    idx = np.searchsorted(cdf, np.asarray(q, dtype=float) * (1 - 1e-12), side="left")
    return v[np.minimum(idx, v.size - 1)]


def credible_intervals(draws, level: float = 0.95, weights=None, names=None, integer_columns=()) -> list[dict]:
    """Equal-tailed intervals per column of ``draws``.

    Columns listed in ``integer_columns`` (for example break dates) are
    reported as integers.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    D = np.asarray(draws, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    if D.shape[0] == 0:
        raise ValueError("no draws")
    names = list(names) if names is not None else [f"x{i}" for i in range(D.shape[1])]
    w = None if weights is None else np.asarray(weights, dtype=float)
    alpha = (1.0 - level) / 2.0
    out = []
    for i, name in enumerate(names):
        lo, med, hi = weighted_quantile(D[:, i], [alpha, 0.5, 1.0 - alpha], w)
        mean = float(np.average(D[:, i], weights=w))
        cast = int if (name in integer_columns or i in integer_columns) else float
        out.append({"name": name, "lower": cast(lo), "median": cast(med), "upper": cast(hi), "mean": mean})
    return out
