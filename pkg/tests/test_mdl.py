from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_t

from breakscope.exceptions import InvalidSegmentationError
from breakscope.mdl import (
    MdlScore,
    calibrate,
    default_min_duration,
    ln_plus,
    log_marginal_from_ssr,
    mdl_criterion,
    mdl_marginal_loglik,
    segment_log_marginal,
    stirling_remainder_r4,
)
from breakscope.segstats import Segmentation, SegmentStats, segment_stats

from conftest import random_regression

# 30-digit mpmath evaluations, frozen.
R4_AT_ONE = 0.081349206349206349206
R4_AT_HALF = 0.16984126984126984127
F_400_1024_K2_M2 = 5586.2202914827828034
G_400_1024_K2_M2 = 2234487.1165931131214
DELTA_R4_400 = -0.00793373839517976257


def test_stirling_remainder_values():
    assert stirling_remainder_r4(1.0) == pytest.approx(R4_AT_ONE, rel=1e-15)
    assert stirling_remainder_r4(0.5) == pytest.approx(R4_AT_HALF, rel=1e-15)
    with pytest.raises(ValueError):
        stirling_remainder_r4(0.0)


def test_stirling_remainder_tracks_lgamma():
    for x in (5.0, 10.0, 50.0):
        exact = math.lgamma(x) - ((x - 0.5) * math.log(x) - x + 0.5 * math.log(2 * math.pi))
        assert stirling_remainder_r4(x) == pytest.approx(exact, abs=2.0 / (1680 * x**7) + 1e-13)


def test_calibration_golden_values():
    st_ = SegmentStats(400, np.zeros(2), 1.0, np.eye(2), 0.0)
    prior = calibrate(st_, m=2, T=1024, K=2)
    assert prior.f_under == pytest.approx(F_400_1024_K2_M2, rel=1e-12)
    assert prior.g_under == pytest.approx(G_400_1024_K2_M2, rel=1e-12)
    assert prior.delta_r4 == pytest.approx(DELTA_R4_400, rel=1e-10)
    assert prior.nu_under == 20.0 and prior.s_under == pytest.approx(1.0 / 20)


def test_ln_plus_and_min_duration():
    assert ln_plus(0) == 0.0 and ln_plus(1) == 0.0
    assert ln_plus(5) == pytest.approx(math.log(5))
    assert default_min_duration(1024, 2) == 20
    assert default_min_duration(10**6, 1) == 500


def _multivariate_t_marginal(X, y, prior, beta_hat):
    """Independent route: y is multivariate t under the NIG prior centred at beta_hat."""
    n = X.shape[0]
    P = X @ np.linalg.solve(X.T @ X, X.T)
    shape = (prior.s_under / prior.nu_under) * (np.eye(n) + prior.g_under * P)
    return multivariate_t(loc=X @ beta_hat, shape=shape, df=prior.nu_under).logpdf(y)


@pytest.mark.parametrize("K, n, m, T", [(1, 25, 0, 25), (2, 40, 1, 90), (3, 60, 3, 500)])
def test_segment_marginal_matches_multivariate_t_density(rng, K, n, m, T):
    ds = random_regression(rng, [n], K=K)
    st_ = segment_stats(ds, 0, n)
    prior = calibrate(st_, m, T, K)
    expected = _multivariate_t_marginal(ds.X, ds.y, prior, st_.beta_hat)
    assert segment_log_marginal(st_, prior) == pytest.approx(expected, abs=1e-7)


def test_vectorized_marginal_matches_scalar(rng):
    ds = random_regression(rng, [200], K=2)
    pairs = [(0, 50), (10, 200), (30, 130)]
    stats = [segment_stats(ds, a, b) for a, b in pairs]
    vec = log_marginal_from_ssr([s.n for s in stats], [s.ssr for s in stats], 2, 200, m=1)
    for s, v in zip(stats, vec):
        assert v == pytest.approx(segment_log_marginal(s, calibrate(s, 1, 200, 2)), rel=1e-12)
    assert log_marginal_from_ssr([50, 50], [0.0, np.nan], 2, 200)[0] == -np.inf


def test_criterion_and_marginal_agree(rng):
    ds = random_regression(rng, [150, 200, 120], K=2)
    seg = Segmentation((150, 350), ds.T)
    a = mdl_criterion(ds, seg)
    b = mdl_marginal_loglik(ds, seg)
    assert abs(a.value - b.value) < 1e-6
    assert a.value == pytest.approx(sum(a.per_segment) - sum(a.penalty_terms.values()))


def test_criterion_components_by_hand(rng):
    ds = random_regression(rng, [60, 60], K=1)
    seg = Segmentation((60,), 120)
    s = [segment_stats(ds, 0, 60).ssr, segment_stats(ds, 60, 120).ssr]
    loglik = sum(-30 * math.log(2 * math.pi * v / 60) - 30 for v in s)
    expected = loglik - 0 - 2 * math.log(120) - 1.0 * (2 * math.log(60))
    assert mdl_criterion(ds, seg, 10).value == pytest.approx(expected, rel=1e-12)


def test_min_duration_enforced(rng):
    ds = random_regression(rng, [100], K=1)
    with pytest.raises(InvalidSegmentationError):
        mdl_criterion(ds, Segmentation((5,), 100))
    with pytest.raises(InvalidSegmentationError):
        mdl_marginal_loglik(ds, Segmentation((5,), 100))


def test_score_round_trip():
    s = MdlScore(-12.5, (-3.0, -float("inf")), {"a": 1.0})
    d = s.to_dict()
    assert d["per_segment"][1] == "-inf"
    back = MdlScore.from_dict(d)
    assert back.value == s.value and back.per_segment == s.per_segment


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 3), m=st.integers(0, 3))
def test_equivalence_error_shrinks_with_segment_length(seed, K, m):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(100, 300, size=m + 1)
    ds = random_regression(rng, lengths, K=K)
    seg = Segmentation(tuple(np.cumsum(lengths)[:-1]), ds.T)
    diff = abs(mdl_criterion(ds, seg, 1).value - mdl_marginal_loglik(ds, seg, 1).value)
    assert diff <= 1e-6


@pytest.mark.parametrize("n", [5, 10, 50, 100, 1000])
@pytest.mark.parametrize("s", [0.1, 1.0, 100.0])
def test_variance_estimator_ordering(n, s):
    root = math.sqrt(n)
    assert s / (n + 2 * root) < s / n < s / (n - 2 * root)
