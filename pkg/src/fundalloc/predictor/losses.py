"""Likelihood-based losses over (conversion probability, mu, sigma) heads.

All revenue terms use the log-shifted label v = log(R + 1) with y_v = R + 1,
so a non-converted sample (R = 0) sits at v = 0 with a finite density.

Each ``*_terms`` function returns the mean loss together with its gradient
with respect to the raw head outputs (conversion logit, mu, sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ConfigError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# exp() of anything below this underflows to 0 in float64
LOG_DENSITY_FLOOR = -745.0


@dataclass(frozen=True)
class PredictionTriple:
    """Head outputs for one or many pairs.

    ``logit`` is kept when available so that log-probabilities can be taken
    without cancellation; otherwise it is derived from ``p_c``.
    """

    p_c: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    logit: np.ndarray = None

    def __post_init__(self):
        for name in ("p_c", "mu", "sigma"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if self.logit is None:
            with np.errstate(divide="ignore"):
                logit = np.log(self.p_c) - np.log1p(-self.p_c)
        else:
            logit = np.atleast_1d(np.asarray(self.logit, dtype=np.float64))
        object.__setattr__(self, "logit", logit)

    def __len__(self):
        return len(self.p_c)


def lognormal_logpdf(v_obs, mu, sigma, y_v):
    """log of 1/(sqrt(2 pi) sigma y_v) * exp(-(v - mu)^2 / (2 sigma^2))."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ConfigError("NONPOSITIVE_SIGMA", "sigma must be positive")
    v_obs = np.asarray(v_obs, dtype=np.float64)
    z = (v_obs - mu) / sigma
    out = -LOG_SQRT_2PI - np.log(sigma) - np.log(y_v) - 0.5 * z * z
    return out if out.ndim else float(out)


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def _labels(batch):
    revenue = np.asarray(batch.revenue, dtype=np.float64)
    y = np.asarray(batch.y, dtype=np.int64)
    if len(y) == 0:
        raise ConfigError("EMPTY_BATCH", "loss needs at least one sample")
    return y == 1, np.log1p(revenue), revenue + 1.0


def _check_aligned(batch, triples):
    if len(batch.y) != len(triples):
        raise ConfigError("DIM_MISMATCH", f"{len(batch.y)} samples but {len(triples)} predictions")


def esj_terms(logit, mu, sigma, pos, v, y_v, epsilon=0.0, counterfactual=True):
    """Entire-space joint negative log-likelihood and head gradients.

    Positive: -(log p + logpdf(v)).  Negative: -log(1 - p + p * pdf(v_cf))
    where v_cf = log(1 + epsilon) is the counterfactual revenue a
    non-converted customer would have produced; evaluated as a two-term
    log-sum-exp.  With ``counterfactual=False`` the negative term is plain
    -log(1 - p).
    """
    m = len(logit)
    p = expit(logit)
    log_p = _log_sigmoid(logit)
    log_q = _log_sigmoid(-logit)
    neg = ~pos

    dz = np.empty(m)
    dmu = np.zeros(m)
    dsig = np.zeros(m)

    r = v[pos] - mu[pos]
    s = sigma[pos]
    ll_pos = log_p[pos] + lognormal_logpdf(v[pos], mu[pos], s, y_v[pos])
    dz[pos] = p[pos] - 1.0
    dmu[pos] = -r / s ** 2
    dsig[pos] = 1.0 / s - r * r / s ** 3

    if counterfactual:
        v_cf = math.log1p(epsilon)
        s = sigma[neg]
        ell = lognormal_logpdf(np.full(s.shape, v_cf), mu[neg], s, 1.0 + epsilon)
        clamped = ell < LOG_DENSITY_FLOOR
        ell = np.maximum(ell, LOG_DENSITY_FLOOR)
        ll_neg = np.logaddexp(log_q[neg], log_p[neg] + ell)
        # posterior weight of "intended but did not convert"
        w = np.exp(log_p[neg] + ell - ll_neg)
        dz[neg] = p[neg] - w
        r = v_cf - mu[neg]
        w_live = np.where(clamped, 0.0, w)
        dmu[neg] = -w_live * r / s ** 2
        dsig[neg] = w_live * (1.0 / s - r * r / s ** 3)
    else:
        ll_neg = log_q[neg]
        dz[neg] = p[neg]

    loss = -(math.fsum(ll_pos) + math.fsum(ll_neg)) / m
    return loss, (dz / m, dmu / m, dsig / m)


def ziln_terms(logit, mu, sigma, pos, v, y_v):
    """Cross-entropy on every sample plus lognormal regression on positives only."""
    m = len(logit)
    y = pos.astype(np.float64)
    p = expit(logit)
    ce = y * _log_sigmoid(logit) + (1.0 - y) * _log_sigmoid(-logit)
    reg = lognormal_logpdf(v[pos], mu[pos], sigma[pos], y_v[pos])
    loss = -(math.fsum(ce) + math.fsum(reg)) / m
    dz = p - y
    dmu = np.zeros(m)
    dsig = np.zeros(m)
    r = v[pos] - mu[pos]
    s = sigma[pos]
    dmu[pos] = -r / s ** 2
    dsig[pos] = 1.0 / s - r * r / s ** 3
    return loss, (dz / m, dmu / m, dsig / m)


def mse_terms(logit, mu, sigma, pos, v, y_v):
    """Mean binary cross-entropy plus mean squared error of mu against v over positives."""
    m = len(logit)
    y = pos.astype(np.float64)
    p = expit(logit)
    ce = y * _log_sigmoid(logit) + (1.0 - y) * _log_sigmoid(-logit)
    n_pos = int(pos.sum())
    dmu = np.zeros(m)
    reg = 0.0
    if n_pos:
        r = mu[pos] - v[pos]
        reg = math.fsum(r * r) / n_pos
        dmu[pos] = 2.0 * r / n_pos
    loss = -math.fsum(ce) / m + reg
    return loss, ((p - y) / m, dmu, np.zeros(m))


def esj_loss(batch, triples: PredictionTriple, epsilon=0.0, counterfactual=True):
    _check_aligned(batch, triples)
    pos, v, y_v = _labels(batch)
    return esj_terms(triples.logit, triples.mu, triples.sigma, pos, v, y_v,
                     epsilon, counterfactual)[0]


def ziln_loss(batch, triples: PredictionTriple):
    _check_aligned(batch, triples)
    pos, v, y_v = _labels(batch)
    return ziln_terms(triples.logit, triples.mu, triples.sigma, pos, v, y_v)[0]


def mse_loss(batch, triples: PredictionTriple):
    _check_aligned(batch, triples)
    pos, v, y_v = _labels(batch)
    return mse_terms(triples.logit, triples.mu, triples.sigma, pos, v, y_v)[0]


LOSSES = {
    "esj": esj_terms,
    "ziln": ziln_terms,
    "mse": mse_terms,
}


def loss_terms(kind, logit, mu, sigma, pos, v, y_v, epsilon=0.0):
    if kind == "esj":
        return esj_terms(logit, mu, sigma, pos, v, y_v, epsilon)
    if kind in LOSSES:
        return LOSSES[kind](logit, mu, sigma, pos, v, y_v)
    raise ConfigError("INVALID_CONFIG", f"unknown loss {kind!r}")
