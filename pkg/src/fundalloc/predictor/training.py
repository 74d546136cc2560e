"""Mini-batch Adam training with best-validation model selection."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DivergedError
from .losses import LOSSES
from .model import PredictorModel


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "esj"
    epsilon: float = 0.0
    learning_rate: float = 3e-3
    batch_size: int = 512
    epochs: int = 10
    seed: int = 0
    sigma_floor: float = 1e-3
    hidden: tuple = (64, 32)
    activation: str = "elu"
    validation_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    data_init: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.loss not in LOSSES:
            raise ConfigError("INVALID_CONFIG", f"loss must be one of {sorted(LOSSES)}")
        if not self.epsilon >= 0:
            raise ConfigError("INVALID_CONFIG", "epsilon must be >= 0")
        if not self.sigma_floor > 0:
            raise ConfigError("INVALID_CONFIG", "sigma_floor must be > 0")
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("INVALID_CONFIG", "learning_rate >= 0, batch_size >= 1, epochs >= 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("INVALID_CONFIG", "validation_fraction must be in [0, 1)")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("INVALID_CONFIG", "hidden widths must be positive")

    @classmethod
    def from_dict(cls, raw):
        known = {k: v for k, v in raw.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self):
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        return out


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        if self.lr == 0:
            return
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _inv_softplus(y):
    return y + math.log(-math.expm1(-y))


def _init_head_biases(model, y, v):
    """Start the heads at the marginal conversion rate and positive-revenue moments."""
    pos = y == 1
    rate = min(max(pos.mean(), 1e-4), 1 - 1e-4)
    bias = model.params[-1]
    bias[0] = math.log(rate / (1.0 - rate))
    if pos.sum() > 1:
        bias[1] = float(v[pos].mean())
        spread = max(float(v[pos].std()) - model.sigma_floor, 1e-2)
        bias[2] = _inv_softplus(spread)


def _split(n, fraction, rng):
    perm = rng.permutation(n)
    n_val = int(round(n * fraction))
    if n_val == 0 or n_val == n:
        return perm, None
    return perm[n_val:], perm[:n_val]


def _eval_loss(model, x, y, revenue, kind, epsilon, chunk=65536):
    if len(y) <= chunk:
        return model.compute_loss(x, y, revenue, kind, epsilon)
    total = 0.0
    for s in range(0, len(y), chunk):
        sl = slice(s, s + chunk)
        total += model.compute_loss(x[sl], y[sl], revenue[sl], kind, epsilon) * len(y[sl])
    return total / len(y)


def train(dataset, config: TrainConfig = TrainConfig(), return_history=False):
    """Fit a :class:`PredictorModel` and return the epoch with the lowest validation loss.

    All randomness (split, initialization, shuffles) comes from ``config.seed``.
    Raises DIVERGED if a loss or gradient becomes non-finite.
    """
    # overflow is caught explicitly as DIVERGED below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _train(dataset, config, return_history)


def _train(dataset, config, return_history):
    if len(dataset) == 0:
        raise ConfigError("EMPTY_BATCH", "training set is empty")
    rng = np.random.default_rng(config.seed)
    x = np.hstack([dataset.customer_features, dataset.fund_features]).astype(np.float64)
    y = np.asarray(dataset.y, dtype=np.int64)
    revenue = np.asarray(dataset.revenue, dtype=np.float64)
    if np.any(revenue < 0) or not np.all(np.isfinite(revenue)):
        raise ConfigError("INVALID_CONFIG", "revenue must be finite and non-negative")

    train_idx, val_idx = _split(len(y), config.validation_fraction, rng)
    init_seed = int(rng.integers(2 ** 32))
    model = PredictorModel.initialize(
        dataset.customer_features.shape[1], dataset.fund_features.shape[1],
        hidden=config.hidden, seed=init_seed, activation=config.activation,
        sigma_floor=config.sigma_floor, epsilon=config.epsilon, loss=config.loss,
    )
    if config.data_init:
        _init_head_biases(model, y[train_idx], np.log1p(revenue[train_idx]))

    xt, yt, rt = x[train_idx], y[train_idx], revenue[train_idx]
    if val_idx is None:
        xv, yv, rv = xt, yt, rt
    else:
        xv, yv, rv = x[val_idx], y[val_idx], revenue[val_idx]

    def check(value, what):
        if not math.isfinite(value):
            raise DivergedError("DIVERGED", f"{what} became non-finite")
        return value

    kind, eps = config.loss, config.epsilon
    history = TrainHistory()
    best = model.copy()
    best_val = check(_eval_loss(model, xv, yv, rv, kind, eps), "validation loss")
    history.val_loss.append(best_val)
    opt = Adam(model.params, config.learning_rate, config.beta1, config.beta2)
    bs = config.batch_size

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(yt))
        running = 0.0
        for s in range(0, len(order), bs):
            idx = order[s:s + bs]
            loss, grads = model.loss_and_gradient(xt[idx], yt[idx], rt[idx], kind, eps)
            check(loss, "training loss")
            if not all(np.all(np.isfinite(g)) for g in grads):
                raise DivergedError("DIVERGED", "gradient became non-finite")
            opt.step(model.params, grads)
            running += loss * len(idx)
        history.train_loss.append(running / len(order))
        val = check(_eval_loss(model, xv, yv, rv, kind, eps), "validation loss")
        history.val_loss.append(val)
        if val < best_val:
            best_val, best = val, model.copy()
            history.best_epoch = epoch

    best.meta = {"train_config": config.to_dict(), "best_epoch": history.best_epoch,
                 "val_loss": best_val}
    return (best, history) if return_history else best
