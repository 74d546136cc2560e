"""Seeded synthetic instances and training data with known ground truth.

Ground-truth heads are linear in the concatenated (customer, fund) features:
logit p*, mu* and log sigma*.  A latent purchase intention C ~ Bernoulli(p*)
is drawn per pair; an intending customer converts observably with
probability ``delayed_q`` (the rest are intent-but-unconverted negatives).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .domain import AllocationInstance, RevenueMatrix
from .errors import ConfigError

# SeedSequence spawn keys; fixed so adding a stream never shifts the others
_STREAM_WEIGHTS = 0
_STREAM_FUNDS = 1
_STREAM_CUSTOMERS = 2
_STREAM_DEMAND = 3
_STREAM_TRAIN = 4


@dataclass(frozen=True)
class GeneratorConfig:
    n_customers: int = 1000
    n_funds: int = 8
    k: int = 1
    customer_dim: int = 4
    fund_dim: int = 3
    n_levels: int = 5
    demand_shares: Optional[Sequence[float]] = None
    demands: Optional[Sequence[int]] = None
    risk_tolerance: Optional[Sequence[int]] = None
    risk_level: Optional[Sequence[int]] = None
    pinned_revenue: Optional[Sequence[Sequence[float]]] = None
    correlated_risk: bool = False
    n_samples: int = 0
    delayed_q: float = 0.9
    intercept_logit: float = -1.5
    intercept_mu: float = 3.0
    intercept_log_sigma: float = math.log(0.5)
    weight_scale: float = 0.6
    feature_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        bad = []
        if self.n_customers < 1:
            bad.append("n_customers must be >= 1")
        if self.n_funds < 1:
            bad.append("n_funds must be >= 1")
        if not 1 <= self.k <= self.n_funds:
            bad.append("k must be in [1, n_funds]")
        if self.customer_dim < 0 or self.fund_dim < 0:
            bad.append("feature dims must be >= 0")
        if self.n_levels < 1:
            bad.append("n_levels must be >= 1")
        if self.n_samples < 0:
            bad.append("n_samples must be >= 0")
        if not 0.0 < self.delayed_q <= 1.0:
            bad.append("delayed_q must be in (0, 1]")
        if self.demand_shares is not None:
            shares = np.asarray(self.demand_shares, dtype=float)
            if shares.shape != (self.n_funds,) or np.any(shares <= 0):
                bad.append("demand_shares needs n_funds positive entries")
        if self.demands is not None:
            d = np.asarray(self.demands)
            if d.shape != (self.n_funds,) or np.any(d < 0):
                bad.append("demands needs n_funds non-negative entries")
            elif int(d.sum()) != self.k * self.n_customers:
                bad.append("demands must sum to k * n_customers")
        if self.risk_tolerance is not None and len(self.risk_tolerance) != self.n_customers:
            bad.append("risk_tolerance needs n_customers entries")
        if self.risk_level is not None and len(self.risk_level) != self.n_funds:
            bad.append("risk_level needs n_funds entries")
        if self.pinned_revenue is not None:
            if np.shape(self.pinned_revenue) != (self.n_customers, self.n_funds):
                bad.append("pinned_revenue must be n_customers x n_funds")
        if bad:
            raise ConfigError("INVALID_CONFIG", "; ".join(bad))

    @classmethod
    def from_dict(cls, raw):
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError("INVALID_CONFIG", f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self):
        return asdict(self)

    @property
    def pair_dim(self):
        return self.customer_dim + self.fund_dim


@dataclass(frozen=True)
class GroundTruth:
    p_star: np.ndarray
    mu_star: np.ndarray
    sigma_star: np.ndarray

    @property
    def expected_revenue(self):
        return self.p_star * np.exp(self.mu_star + self.sigma_star ** 2 / 2.0)


@dataclass(frozen=True)
class LabeledSample:
    customer_features: np.ndarray
    fund_features: np.ndarray
    y: int
    revenue: float

    @property
    def v(self):
        return math.log1p(self.revenue)


@dataclass
class TrainingData:
    """Column-wise labelled pairs; iterating yields :class:`LabeledSample`.

    ``intent`` (the latent C) and ``truth`` are only known for synthetic data.
    """

    customer_features: np.ndarray
    fund_features: np.ndarray
    y: np.ndarray
    revenue: np.ndarray
    intent: Optional[np.ndarray] = None
    truth: Optional[GroundTruth] = None
    fund_index: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.y)
        if not (len(self.customer_features) == len(self.fund_features) == len(self.revenue) == n):
            raise ConfigError("DIM_MISMATCH", "training columns have different lengths")

    def __len__(self):
        return len(self.y)

    def __getitem__(self, i):
        return LabeledSample(self.customer_features[i], self.fund_features[i],
                             int(self.y[i]), float(self.revenue[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def features(self):
        return np.hstack([self.customer_features, self.fund_features])

    @property
    def v(self):
        return np.log1p(self.revenue)

    def subset(self, idx):
        truth = None
        if self.truth is not None:
            truth = GroundTruth(self.truth.p_star[idx], self.truth.mu_star[idx],
                                self.truth.sigma_star[idx])
        return TrainingData(
            self.customer_features[idx], self.fund_features[idx], self.y[idx],
            self.revenue[idx],
            None if self.intent is None else self.intent[idx], truth,
            None if self.fund_index is None else self.fund_index[idx],
        )


def _rng(config, stream):
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(stream,)))


def _weights(config):
    rng = _rng(config, _STREAM_WEIGHTS)
    scale = config.weight_scale / math.sqrt(max(config.pair_dim, 1))
    w = rng.normal(0.0, scale, size=(3, config.pair_dim))
    b = np.array([config.intercept_logit, config.intercept_mu, config.intercept_log_sigma])
    # sigma varies less than the other heads
    w[2] *= 0.5
    return w, b


def ground_truth(config, pair_features) -> GroundTruth:
    w, b = _weights(config)
    z = pair_features @ w.T + b
    return GroundTruth(expit(z[:, 0]), z[:, 1], np.exp(z[:, 2]))


def _fund_table(config):
    rng = _rng(config, _STREAM_FUNDS)
    feats = rng.normal(0.0, config.feature_scale, size=(config.n_funds, config.fund_dim))
    if config.risk_level is not None:
        levels = np.asarray(config.risk_level, dtype=np.int64)
    else:
        levels = rng.integers(1, config.n_levels + 1, size=config.n_funds)
        # every customer needs at least k funds it can hold
        levels[rng.permutation(config.n_funds)[:config.k]] = 1
    return feats, levels


def _customer_table(config):
    rng = _rng(config, _STREAM_CUSTOMERS)
    feats = rng.normal(0.0, config.feature_scale, size=(config.n_customers, config.customer_dim))
    if config.risk_tolerance is not None:
        tol = np.asarray(config.risk_tolerance, dtype=np.int64)
    elif config.correlated_risk and config.customer_dim:
        ranks = np.argsort(np.argsort(feats[:, 0], kind="stable"), kind="stable")
        tol = 1 + ranks * config.n_levels // config.n_customers
    else:
        tol = rng.integers(1, config.n_levels + 1, size=config.n_customers)
    return feats, tol


def _pair_features(cust, fund):
    n, m = len(cust), len(fund)
    return np.hstack([np.repeat(cust, m, axis=0), np.tile(fund, (n, 1))])


def _planted_demands(config, eligible):
    """Column counts of a random feasible assignment drawn with demand_shares weights."""
    rng = _rng(config, _STREAM_DEMAND)
    shares = np.ones(config.n_funds) if config.demand_shares is None else np.asarray(
        config.demand_shares, dtype=float)
    gumbel = rng.gumbel(size=eligible.shape)
    keys = np.where(eligible, np.log(shares)[None, :] + gumbel, -np.inf)
    picks = np.argsort(-keys, axis=1, kind="stable")[:, :config.k]
    return np.bincount(picks.ravel(), minlength=config.n_funds)


def generate_instance(config: GeneratorConfig):
    """Build an allocation instance whose revenue is the true expected revenue.

    Returns ``(instance, truth)`` with ``truth`` indexed row-major over
    (customer, fund) pairs.  Ids are 1-based positions.
    """
    fund_feats, levels = _fund_table(config)
    cust_feats, tol = _customer_table(config)
    if np.any((levels < 1) | (levels > config.n_levels)) or np.any(
            (tol < 1) | (tol > config.n_levels)):
        raise ConfigError("INVALID_CONFIG", "risk levels outside [1, n_levels]")
    truth = ground_truth(config, _pair_features(cust_feats, fund_feats))
    n, m = config.n_customers, config.n_funds
    if config.pinned_revenue is not None:
        values = np.asarray(config.pinned_revenue, dtype=np.float64)
    else:
        values = truth.expected_revenue.reshape(n, m)
    eligible = tol[:, None] >= levels[None, :]
    if config.demands is not None:
        demand = np.asarray(config.demands, dtype=np.int64)
    else:
        if np.any(eligible.sum(axis=1) < config.k):
            raise ConfigError("INVALID_CONFIG", "some customer has fewer than k eligible funds")
        demand = _planted_demands(config, eligible)
    instance = AllocationInstance(
        risk_tolerance=tol,
        risk_level=levels,
        demand=demand,
        revenue=RevenueMatrix.dense(values),
        k=config.k,
        customer_ids=np.arange(1, n + 1),
        fund_ids=np.arange(1, m + 1),
        customer_features=cust_feats,
        fund_features=fund_feats,
        n_levels=config.n_levels,
    )
    return instance, truth


def generate_training_data(config: GeneratorConfig, n_samples=None) -> TrainingData:
    """Draw labelled (customer, fund) pairs from a fresh customer population.

    Each sample pairs a new customer (same feature distribution as the
    instance) with a uniformly chosen fund of the instance's fund table.
    Converted revenue is R = exp(N(mu*, sigma*^2)) - 1; a draw with R <= 0
    is an unobservable conversion and is recorded as a negative.
    """
    n = config.n_samples if n_samples is None else int(n_samples)
    if n < 1:
        raise ConfigError("INVALID_CONFIG", "n_samples must be >= 1 to generate training data")
    fund_feats, _ = _fund_table(config)
    rng = _rng(config, _STREAM_TRAIN)
    cust = rng.normal(0.0, config.feature_scale, size=(n, config.customer_dim))
    fidx = rng.integers(0, config.n_funds, size=n)
    fund = fund_feats[fidx]
    truth = ground_truth(config, np.hstack([cust, fund]))
    intent = rng.random(n) < truth.p_star
    observed = intent & (rng.random(n) < config.delayed_q)
    log_amount = rng.normal(truth.mu_star, truth.sigma_star)
    revenue = np.where(observed, np.expm1(log_amount), 0.0)
    revenue = np.where(revenue > 0, revenue, 0.0)
    y = (revenue > 0).astype(np.int64)
    return TrainingData(cust, fund, y, revenue, intent.astype(np.int64), truth, fidx)


def worked_example_config():
    """Three customers, two funds, d = (2, 1), K = 1 with a pinned revenue grid.

    E(u1, f2) = 450 is implied by the optimal total of 1850.
    """
    return GeneratorConfig(
        n_customers=3, n_funds=2, k=1, customer_dim=2, fund_dim=2, n_levels=5,
        demands=(2, 1), risk_tolerance=(1, 1, 1), risk_level=(1, 1),
        pinned_revenue=((510.0, 450.0), (900.0, 600.0), (500.0, 300.0)),
    )


def worked_example_instance():
    return generate_instance(worked_example_config())[0]
