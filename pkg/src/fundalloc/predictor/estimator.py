"""scikit-learn compatible wrapper around :func:`train`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import ConfigError
from .metrics import auc_score, point_prediction
from .model import PredictorModel, expected_revenue
from .training import TrainConfig, train


class _Columns:
    """Minimal dataset view accepted by :func:`train`."""

    def __init__(self, cust, fund, y, revenue):
        self.customer_features, self.fund_features = cust, fund
        self.y, self.revenue = y, revenue

    def __len__(self):
        return len(self.y)


class RevenuePredictor(RegressorMixin, BaseEstimator):
    """Expected-revenue regressor.

    ``fit(X, R)`` takes the concatenated customer and fund features and the
    observed revenue (0 for non-converted pairs); the first
    ``customer_dim`` columns are the customer part.  ``predict`` returns
    the expected revenue p_c * exp(mu + sigma^2 / 2) on the shifted scale.
    """

    def __init__(self, customer_dim=None, loss="esj", epsilon=0.0, learning_rate=3e-3,
                 batch_size=512, epochs=10, hidden=(64, 32), sigma_floor=1e-3,
                 validation_fraction=0.1, random_state=0):
        self.customer_dim = customer_dim
        self.loss = loss
        self.epsilon = epsilon
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.hidden = hidden
        self.sigma_floor = sigma_floor
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            loss=self.loss, epsilon=self.epsilon, learning_rate=self.learning_rate,
            batch_size=self.batch_size, epochs=self.epochs, seed=int(self.random_state or 0),
            sigma_floor=self.sigma_floor, hidden=tuple(self.hidden),
            validation_fraction=self.validation_fraction,
        )

    def fit(self, X, R):
        X, R = check_X_y(X, R, dtype=np.float64, y_numeric=True)
        if np.any(R < 0):
            raise ConfigError("INVALID_CONFIG", "revenue must be non-negative")
        split = X.shape[1] if self.customer_dim is None else int(self.customer_dim)
        if not 0 <= split <= X.shape[1]:
            raise ConfigError("DIM_MISMATCH", "customer_dim exceeds the number of features")
        data = _Columns(X[:, :split], X[:, split:], (R > 0).astype(np.int64), R)
        self.model_, self.history_ = train(data, self._config(), return_history=True)
        self.n_features_in_ = X.shape[1]
        return self

    def _triple(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError("DIM_MISMATCH", f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.model_.forward(X)

    def predict_triple(self, X):
        return self._triple(X)

    def predict_proba(self, X):
        p = self._triple(X).p_c
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return np.atleast_1d(expected_revenue(self._triple(X)))

    def predict_log_revenue(self, X):
        return point_prediction(self._triple(X))

    def score(self, X, R, sample_weight=None):
        """AUC of the conversion head against R > 0."""
        return auc_score(np.asarray(R) > 0, self._triple(X).p_c)

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)

    @classmethod
    def from_model(cls, model: PredictorModel):
        est = cls(customer_dim=model.customer_dim, loss=model.loss, epsilon=model.epsilon,
                  hidden=model.hidden, sigma_floor=model.sigma_floor)
        est.model_ = model
        est.n_features_in_ = model.input_dim
        return est
