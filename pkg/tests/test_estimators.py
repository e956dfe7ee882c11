from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from breakscope import ARBreakForecaster, BreakRegressor, simulate_dgp
from breakscope.exceptions import DataError


def test_regressor_params_and_clone():
    est = BreakRegressor(method="gmdl", max_breaks=3)
    assert est.get_params()["max_breaks"] == 3
    c = clone(est).set_params(method="bsmdl")
    assert c.method == "bsmdl" and est.method == "gmdl"


def test_regressor_fit_predict():
    r = np.random.default_rng(0)
    X = r.normal(size=(400, 1))
    y = np.where(np.arange(400) < 200, -1.0, 2.0) * X[:, 0] + 0.3 * r.normal(size=400)
    est = BreakRegressor().fit(X, y)
    assert est.n_breaks_ == 1 and abs(est.breaks_[0] - 200) <= 5
    assert est.coef_[0] == pytest.approx(2.0, abs=0.1)
    np.testing.assert_allclose(est.predict(X[:3]), est.intercept_ + X[:3, 0] * est.coef_[0])
    with pytest.raises(ValueError):
        est.predict(np.ones((2, 2)))


def test_regressor_validation():
    with pytest.raises(NotFittedError):
        BreakRegressor().predict(np.ones((2, 1)))
    with pytest.raises(DataError):
        BreakRegressor().fit(np.ones((5, 1)), np.ones(4))
    with pytest.raises(DataError):
        BreakRegressor().fit(np.ones((5, 1)), [1, 2, np.nan, 4, 5])


def test_forecaster():
    y = simulate_dgp("C", 1024, 2)
    f = ARBreakForecaster(n_draws=200, wbs_intervals=100).fit(y)
    assert sum(f.posterior_.values()) == pytest.approx(1.0)
    fc = f.forecast(4)
    assert fc.shape == (4,) and np.all(np.isfinite(fc))
    np.testing.assert_allclose(f.predict(4), fc)
