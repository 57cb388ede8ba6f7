import numpy as np
import pytest
from sklearn.base import clone

from bartinfluence.estimator import BARTRegressor


def test_estimator_api(toy_data):
    est = BARTRegressor(m=10, ndraws=30, burn=30, random_state=1)
    assert clone(est).get_params() == est.get_params()
    X, y = np.asarray(toy_data.predictors), np.asarray(toy_data.response)
    est.fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (80,)
    assert est.score(X, y) > 0.5
    assert est.predict_draws(X[:4]).shape == (30, 4)
    res = est.predict_reweighted(X[:20], holdouts=[0], method="int", on_degenerate="nan")
    assert res.weighted_mean.shape == (20,)
    with pytest.raises(ValueError):
        est.predict(X[:, :1])


def test_unfitted_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        BARTRegressor().predict(np.zeros((2, 2)))
