"""scikit-learn style wrapper around the p-n criterion pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError
from .expfam import ExpFamilyModel, MultinomialModel, QuadraticModel
from .general import GeneralModel
from .modelsel import log_likelihood
from .pipeline import run_criterion


class PNCriterion(BaseEstimator):
    """Estimate the KL estimation risk of a model and decide the p-n criterion.

    Parameters
    ----------
    model : ExpFamilyModel, GeneralModel or str
        A model instance, or ``"multinomial"`` (cell labels in one column) or
        ``"quadratic"`` (Gaussian reference at the sample mean and covariance).
    alpha : float
        Bayes-error tolerance; the threshold is ``C = 8 alpha^2`` by default.
    order : {"first", "second"}
    threshold_mode : {"approximate", "exact"}
    method : "analytic" or :class:`Sampled`
        How model-side moments are obtained.
    ridge : float
        Added to the model Fisher metric; zero leaves it untouched.

    Attributes
    ----------
    model_, theta_, first_order_, second_order_, risk_, threshold_, passed_,
    report_, n_features_in_
    """

    def __init__(self, model="quadratic", alpha=0.05, order="second",
                 threshold_mode="approximate", method="analytic", ridge=0.0):
        self.model = model
        self.alpha = alpha
        self.order = order
        self.threshold_mode = threshold_mode
        self.method = method
        self.ridge = ridge

    def _resolve_model(self, X):
        if isinstance(self.model, (ExpFamilyModel, GeneralModel)):
            return self.model
        if self.model == "multinomial":
            labels = X[:, 0]
            if np.any(labels != np.round(labels)) or labels.min() < 0:
                raise ConfigError("multinomial labels must be non-negative integers")
            return MultinomialModel(int(labels.max()))
        if self.model == "quadratic":
            Q = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
            return QuadraticModel(X.mean(axis=0), Q)
        raise ConfigError(f"unknown model {self.model!r}")

    def fit(self, X, y=None):
        if self.order not in ("first", "second"):
            raise ConfigError(f"order must be 'first' or 'second', got {self.order!r}")
        X = check_array(X, dtype=float, ensure_min_samples=2)
        self.n_features_in_ = X.shape[1]
        model = self._resolve_model(X)
        data = X[:, 0] if isinstance(model, MultinomialModel) else X
        report = run_criterion(model, data, self.alpha, self.order, self.threshold_mode,
                               self.method, ridge=self.ridge)
        self.model_ = model
        self.report_ = report
        self.theta_ = np.asarray(report.extras["theta_hat"], dtype=float)
        self.first_order_ = report.first_order
        self.second_order_ = report.second_order
        self.risk_ = report.total
        self.threshold_ = report.threshold.C
        self.passed_ = report.passed
        return self

    def _data(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, fitted with {self.n_features_in_}")
        return X[:, 0] if isinstance(self.model_, MultinomialModel) else X

    def transform(self, X):
        """Sufficient statistics ``xi(X)`` (exponential families only)."""
        data = self._data(X)
        if not isinstance(self.model_, ExpFamilyModel):
            raise ConfigError("transform needs an exponential-family model")
        return self.model_.xi(data)

    def score_samples(self, X):
        """Per-row log-likelihood at the fitted parameter."""
        data = self._data(X)
        return log_likelihood(self.model_, data, self.theta_, self.method)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))
