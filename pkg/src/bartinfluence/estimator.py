"""scikit-learn style front end."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data_model import Dataset, ModelConfig
from .diagnostics import detect, diagnose
from .reweighting import DEFAULT_QUANTILES, Reweighter
from .sampler import fit


class BARTRegressor(RegressorMixin, BaseEstimator):
    """Sum-of-trees regression with influence diagnostics and case-deletion reweighting.

    Parameters mirror :class:`~bartinfluence.data_model.ModelConfig`;
    ``random_state`` is the chain seed.

    Attributes
    ----------
    posterior_ : PosteriorSample
    data_ : Dataset
        Training data, kept for diagnostics and reweighting.
    n_features_in_ : int
    """

    def __init__(
        self,
        m=200,
        alpha=0.95,
        beta=2.0,
        k=2.0,
        nu=3.0,
        q=0.90,
        n0=5,
        numcut=100,
        ndraws=1000,
        burn=1000,
        random_state=0,
    ):
        self.m = m
        self.alpha = alpha
        self.beta = beta
        self.k = k
        self.nu = nu
        self.q = q
        self.n0 = n0
        self.numcut = numcut
        self.ndraws = ndraws
        self.burn = burn
        self.random_state = random_state

    def _config(self) -> ModelConfig:
        seed = self.random_state
        if seed is None:
            seed = int(np.random.default_rng().integers(2**31))
        elif isinstance(seed, np.random.RandomState):
            seed = int(seed.randint(2**31))
        return ModelConfig(
            m=self.m, alpha=self.alpha, beta=self.beta, k=self.k, nu=self.nu, q=self.q, n0=self.n0,
            numcut=self.numcut, ndraws=self.ndraws, burn=self.burn, seed=int(seed),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.data_ = Dataset(X, y)
        self.posterior_ = fit(self.data_, self._config())
        self.n_features_in_ = X.shape[1]
        return self

    def _points(self, X):
        check_is_fitted(self, "posterior_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        X = self._points(X)
        return self.posterior_.predict(X)

    def predict_draws(self, X):
        """Per-draw predictions, shape (ndraws, n_samples)."""
        X = self._points(X)
        return self.posterior_.predict_draws(X)

    def diagnose(self, *, exact=True, kl_rule="quantile", n0_tolerance=0.0):
        check_is_fitted(self, "posterior_")
        return diagnose(self.posterior_, self.data_, exact=exact, kl_rule=kl_rule, n0_tolerance=n0_tolerance)

    def predict_reweighted(
        self, X, holdouts="auto", method="union-int", *, delta=None, quantiles=DEFAULT_QUANTILES,
        rule="combined", k_sd=2, on_degenerate="raise",
    ):
        """Predictions with the held-out rows' influence removed by importance weights.

        ``holdouts="auto"`` uses the rows flagged by ``rule`` at ``k_sd``.
        """
        X = self._points(X)
        if isinstance(holdouts, str):
            if holdouts != "auto":
                raise ValueError("holdouts must be 'auto' or a list of indices")
            holdouts = sorted(detect(self.diagnose(exact=False), rule, k_sd))
        if method == "none" or len(holdouts) == 0:
            method, holdouts = "none", [0]
        return Reweighter(self.posterior_, self.data_).predict(
            method, holdouts, X, quantiles=quantiles, delta=delta, on_degenerate=on_degenerate
        )
