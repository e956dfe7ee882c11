from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from breakscope.bayes import parameter_draws
from breakscope.detect import DetectorConfig, Method, detect
from breakscope.select import (
    ModelEnsemble,
    combined_predictive,
    forecast_harness,
    mixture_parameter_density,
    posterior_probabilities,
    predictive_draws,
    predictive_mean,
    sel,
)
from breakscope.segstats import Segmentation, build_ar_dataset
from breakscope.simlab import simulate_dgp

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_posterior_examples():
    assert posterior_probabilities([3.2]).tolist() == [1.0]
    np.testing.assert_allclose(posterior_probabilities([0.0, math.log(3)]), [0.25, 0.75], rtol=1e-15)
    np.testing.assert_allclose(posterior_probabilities([-7.5] * 3), [1 / 3] * 3, rtol=1e-15)
    assert posterior_probabilities([-np.inf, 0.0]).tolist() == [0.0, 1.0]


@pytest.mark.parametrize("bad", [[], [np.nan, 1.0], [np.inf], [-np.inf, -np.inf]])
def test_posterior_errors(bad):
    with pytest.raises(ValueError):
        posterior_probabilities(bad)


@settings(max_examples=200)
@given(st.lists(finite, min_size=1, max_size=12), finite)
def test_posterior_shift_invariance_and_normalization(x, c):
    p = posterior_probabilities(x)
    assert not np.any(np.isnan(p))
    assert abs(p.sum() - 1.0) <= 1e-12
    q = posterior_probabilities(np.asarray(x) + c)
    np.testing.assert_allclose(p, q, atol=1e-9)


@pytest.fixture(scope="module")
def dgp_b():
    return build_ar_dataset(simulate_dgp("B", 1024, 8), 2)


def test_sel_dominates_members(dgp_b):
    cfg = DetectorConfig(wbs_intervals=200)
    methods = (Method.BSMDL, Method.WBSMDL, Method.PGMDL)
    res = sel(dgp_b, cfg, methods)
    for m in methods:
        assert res.score.value >= detect(dgp_b, m, cfg).score.value
    post = res.diagnostics["sel"]["posterior"]
    assert sum(post.values()) == pytest.approx(1.0, abs=1e-12)


def test_sel_identical_candidates_split_evenly(dgp_b):
    res = sel(dgp_b, None, ["BSMDL", "BSMDL"])
    assert res.method_id is Method.BSMDL
    r = detect(dgp_b, "BSMDL")
    ens = ModelEnsemble.from_results([r, r])
    np.testing.assert_allclose(ens.posterior, [0.5, 0.5])


def test_mixture_weights_and_mean(dgp_b):
    r = detect(dgp_b, "BSMDL")
    rng = np.random.default_rng(0)
    betas, _ = parameter_draws(dgp_b, np.tile(r.breaks, (4000, 1)), rng)
    draws = [betas[:, k, :] for k in range(r.m + 1)]
    ens = ModelEnsemble.from_results([r, r])
    t = 600  # regime 2 of DGP B
    mix = mixture_parameter_density(ens, t, [draws, draws])
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)
    b1 = mix.values[:, 1]
    se = b1.std() / math.sqrt(b1.size / 2)
    assert abs(mix.mean()[1] - 1.69) < 2 * se + 0.05


def test_mixture_of_two_means():
    ens = ModelEnsemble([None, None], np.zeros(2), np.array([0.5, 0.5]))
    mix = combined_predictive(ens, 1, [np.zeros((100, 1)), np.full((300, 1), 2.0)])
    assert mix.mean()[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        combined_predictive(ens, 0, [np.zeros((1, 1))] * 2)


def test_one_step_predictive_mean():
    y = simulate_dgp("A", 2000, 1)
    ds = build_ar_dataset(y, 1)
    rng = np.random.default_rng(0)
    paths = predictive_draws(ds, Segmentation((), ds.T), 1, 20000, rng)
    from breakscope.segstats import segment_stats

    b = segment_stats(ds, 0, ds.T).beta_hat
    sd = math.sqrt(segment_stats(ds, 0, ds.T).ssr / ds.T)
    assert abs(paths[:, 0].mean() - (b[0] + b[1] * y[-1])) < 3 * sd / math.sqrt(20000)


def test_single_candidate_predictive_is_that_model(dgp_b):
    r = detect(dgp_b, "BSMDL")
    ens = ModelEnsemble.from_results([r])
    own = predictive_draws(dgp_b, r.segmentation, 3, 5000, np.random.default_rng(1))
    mixed = combined_predictive(ens, 3, [predictive_draws(dgp_b, r.segmentation, 3, 5000, np.random.default_rng(2))])
    sample = mixed.resample(np.random.default_rng(3), 5000)
    assert ks_2samp(own[:, 2], sample[:, 2]).pvalue > 0.01


def test_predictive_mean_matches_path_average(dgp_b):
    r = detect(dgp_b, "BSMDL")
    for fb in (False, True):
        paths = predictive_draws(dgp_b, r.segmentation, 6, 40_000, np.random.default_rng(4), future_break=fb)
        mean = predictive_mean(dgp_b, r.segmentation, 6, 40_000, np.random.default_rng(5), future_break=fb)
        se = paths.std(axis=0) / math.sqrt(paths.shape[0])
        assert np.all(np.abs(paths.mean(axis=0) - mean) < 4 * se)


def test_harness_constant_series():
    rep = forecast_harness(np.full(150, 3.0), ar_orders=(1,), horizons=(1, 3))
    for m in rep.models:
        for h in rep.horizons:
            assert rep.rmsfe(m, h) == 0.0


def test_harness_scores_and_loss_rows():
    y = simulate_dgp("C", 400, 2)
    rep = forecast_harness(
        y, ar_orders=(1,), methods=("BSMDL", "PGMDL"), horizons=(1, 3), start_frac=0.5, n_draws=50,
        refit_every=20, future_break=True, seed=1,
    )
    assert set(rep.models) == {"AR(1)", "AR(1)-Local", "Local", "Local-FB"}
    for m in rep.models:
        for h in rep.horizons:
            assert rep.rmsfe(m, h) >= rep.mafe(m, h)
    header, rows = rep.loss_rows()
    assert len(header) == 1 + len(rep.models) * 2 and len(rows) == rep.origins.size
    with pytest.raises(ValueError):
        forecast_harness(y, horizons=(0,))
