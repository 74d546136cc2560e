"""Held-out metrics: conversion AUC and errors on the log-shifted revenue."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import ConfigError


@dataclass(frozen=True)
class Evaluation:
    auc: float
    mse: float
    mae: float

    def __iter__(self):
        return iter((self.auc, self.mse, self.mae))


def auc_score(y, scores):
    """Mann-Whitney rank statistic with average ranks for ties."""
    y = np.asarray(y).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("SINGLE_CLASS", "AUC needs both positive and negative samples")
    ranks = rankdata(scores, method="average")
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def point_prediction(triple):
    """Predicted log-shifted revenue: p_c * mu (zero branch contributes v = 0)."""
    return triple.p_c * triple.mu


def regression_errors(v_true, v_pred):
    err = np.asarray(v_pred, dtype=np.float64) - np.asarray(v_true, dtype=np.float64)
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def evaluate(model, test_set) -> Evaluation:
    """(AUC of p_c against y, MSE and MAE of p_c * mu against v) over the whole test set."""
    x = np.hstack([test_set.customer_features, test_set.fund_features])
    tri = model.forward(x)
    auc = auc_score(test_set.y, tri.p_c)
    mse, mae = regression_errors(np.log1p(test_set.revenue), point_prediction(tri))
    return Evaluation(auc, mse, mae)


def oracle_evaluation(test_set, q=1.0) -> Evaluation:
    """Metrics of the generating parameters themselves (needs ``test_set.truth``).

    Observed conversion has probability q * p*, so that is the Bayes score.
    """
    truth = test_set.truth
    if truth is None:
        raise ConfigError("INVALID_CONFIG", "test set carries no ground truth")
    p_obs = q * truth.p_star
    auc = auc_score(test_set.y, p_obs)
    mse, mae = regression_errors(np.log1p(test_set.revenue), p_obs * truth.mu_star)
    return Evaluation(auc, mse, mae)
