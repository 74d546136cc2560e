"""Expected-revenue prediction: three-head network, likelihood losses, training."""

from .estimator import RevenuePredictor
from .losses import (
    PredictionTriple,
    esj_loss,
    lognormal_logpdf,
    mse_loss,
    ziln_loss,
)
from .metrics import Evaluation, auc_score, evaluate, oracle_evaluation
from .model import PredictorModel, esj_gradient, expected_revenue, forward, predict_matrix
from .training import Adam, TrainConfig, TrainHistory, train

__all__ = [
    "Adam", "Evaluation", "PredictionTriple", "PredictorModel", "RevenuePredictor",
    "TrainConfig", "TrainHistory", "auc_score", "esj_gradient", "esj_loss", "evaluate",
    "expected_revenue", "forward", "lognormal_logpdf", "mse_loss", "oracle_evaluation",
    "predict_matrix", "train", "ziln_loss",
]
