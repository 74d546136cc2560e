"""Feed-forward expected-revenue model with three heads and manual backprop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..domain import RevenueMatrix, apply_risk_mask
from ..errors import ConfigError
from .losses import PredictionTriple, loss_terms

FORMAT_VERSION = 1
ACTIVATIONS = ("elu", "relu", "tanh")


def _act(name, a):
    if name == "elu":
        return np.where(a > 0, a, np.expm1(np.minimum(a, 0.0)))
    if name == "relu":
        return np.maximum(a, 0.0)
    return np.tanh(a)


def _act_grad(name, a, out):
    if name == "elu":
        return np.where(a > 0, 1.0, out + 1.0)
    if name == "relu":
        return (a > 0).astype(np.float64)
    return 1.0 - out * out


def _dense(h, w, b):
    # einsum keeps each output row independent of batch size (BLAS kernels
    # change summation order with the row count), so predictions are
    # bit-identical however pairs are chunked
    return np.einsum("ij,jk->ik", h, w) + b


def _softplus(z):
    return np.logaddexp(0.0, z)


_sigmoid = expit


@dataclass
class PredictorModel:
    """Shared trunk followed by one linear layer producing three heads.

    Head 0 is the conversion logit (logistic link), head 1 is mu (identity),
    head 2 goes through softplus plus ``sigma_floor`` to give sigma.
    ``params`` alternates weight and bias arrays, trunk first.
    """

    params: list
    customer_dim: int
    fund_dim: int
    activation: str = "elu"
    sigma_floor: float = 1e-3
    epsilon: float = 0.0
    loss: str = "esj"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError("INVALID_CONFIG", f"activation must be one of {ACTIVATIONS}")
        if self.sigma_floor <= 0:
            raise ConfigError("INVALID_CONFIG", "sigma_floor must be positive")

    @classmethod
    def initialize(cls, customer_dim, fund_dim, hidden=(64, 32), seed=0, **kwargs):
        """Weights uniform in +-1/sqrt(fan_in), zero biases."""
        rng = np.random.default_rng(seed)
        sizes = [customer_dim + fund_dim, *hidden, 3]
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(max(fan_in, 1))
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return cls(params, customer_dim, fund_dim, **kwargs)

    @classmethod
    def zeros_like(cls, other):
        return cls([np.zeros_like(p) for p in other.params], other.customer_dim, other.fund_dim,
                   other.activation, other.sigma_floor, other.epsilon, other.loss)

    @property
    def input_dim(self):
        return self.customer_dim + self.fund_dim

    @property
    def hidden(self):
        return tuple(w.shape[1] for w in self.params[0:-2:2])

    def copy(self):
        return PredictorModel([p.copy() for p in self.params], self.customer_dim, self.fund_dim,
                              self.activation, self.sigma_floor, self.epsilon, self.loss,
                              dict(self.meta))

    def _inputs(self, x_u, x_f=None):
        x = np.asarray(x_u, dtype=np.float64)
        if x_f is not None:
            x_f = np.asarray(x_f, dtype=np.float64)
            x = np.atleast_2d(x)
            x_f = np.atleast_2d(x_f)
            if x.shape[1] != self.customer_dim or x_f.shape[1] != self.fund_dim:
                raise ConfigError(
                    "DIM_MISMATCH",
                    f"expected {self.customer_dim} customer and {self.fund_dim} fund features, "
                    f"got {x.shape[1]} and {x_f.shape[1]}",
                )
            if len(x) != len(x_f):
                x, x_f = np.broadcast_arrays(x, x_f) if len(x) == 1 or len(x_f) == 1 else (x, x_f)
            x = np.hstack([x, x_f])
        x = np.atleast_2d(x)
        if x.shape[1] != self.input_dim:
            raise ConfigError("DIM_MISMATCH", f"expected {self.input_dim} features, got {x.shape[1]}")
        return x

    def _forward(self, x):
        acts = [x]
        pre = []
        h = x
        for w, b in zip(self.params[0:-2:2], self.params[1:-2:2]):
            a = _dense(h, w, b)
            h = _act(self.activation, a)
            pre.append(a)
            acts.append(h)
        out = _dense(h, self.params[-2], self.params[-1])
        return out, pre, acts

    def _triple(self, out):
        logit, mu, s = out[:, 0], out[:, 1], out[:, 2]
        return PredictionTriple(_sigmoid(logit), mu, _softplus(s) + self.sigma_floor, logit)

    def forward(self, x_u, x_f=None) -> PredictionTriple:
        """Predict (p_c, mu, sigma) for feature rows (customer and fund parts)."""
        out, _, _ = self._forward(self._inputs(x_u, x_f))
        return self._triple(out)

    def loss_and_gradient(self, x, y, revenue, kind=None, epsilon=None):
        """Mean loss and its exact gradient with respect to every parameter."""
        kind = kind or self.loss
        epsilon = self.epsilon if epsilon is None else epsilon
        x = self._inputs(x)
        out, pre, acts = self._forward(x)
        tri = self._triple(out)
        revenue = np.asarray(revenue, dtype=np.float64)
        pos = np.asarray(y) == 1
        loss, (dz, dmu, dsig) = loss_terms(kind, tri.logit, tri.mu, tri.sigma, pos,
                                           np.log1p(revenue), revenue + 1.0, epsilon)
        dout = np.stack([dz, dmu, dsig * _sigmoid(out[:, 2])], axis=1)
        grads = [None] * len(self.params)
        grads[-2] = acts[-1].T @ dout
        grads[-1] = dout.sum(axis=0)
        delta = dout @ self.params[-2].T
        for i in range(len(pre) - 1, -1, -1):
            delta = delta * _act_grad(self.activation, pre[i], acts[i + 1])
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i:
                delta = delta @ self.params[2 * i].T
        return loss, grads

    def compute_loss(self, x, y, revenue, kind=None, epsilon=None):
        return self.loss_and_gradient(x, y, revenue, kind, epsilon)[0]

    # persistence -----------------------------------------------------------

    def to_dict(self):
        return {
            "format": "fundalloc-predictor",
            "version": FORMAT_VERSION,
            "customer_dim": self.customer_dim,
            "fund_dim": self.fund_dim,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "links": ["logistic", "identity", "softplus+floor"],
            "sigma_floor": self.sigma_floor,
            "epsilon": self.epsilon,
            "loss": self.loss,
            "meta": self.meta,
            "params": [{"shape": list(p.shape), "values": p.ravel().tolist()} for p in self.params],
        }

    @classmethod
    def from_dict(cls, raw):
        if raw.get("format") != "fundalloc-predictor" or raw.get("version") != FORMAT_VERSION:
            raise ConfigError("INVALID_CONFIG", "not a supported predictor model file")
        params = [np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in raw["params"]]
        return cls(params, raw["customer_dim"], raw["fund_dim"], raw["activation"],
                   raw["sigma_floor"], raw["epsilon"], raw["loss"], raw.get("meta", {}))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def forward(model: PredictorModel, x_u, x_f=None) -> PredictionTriple:
    return model.forward(x_u, x_f)


def expected_revenue(triple: PredictionTriple, shifted=True):
    """p_c * exp(mu + sigma^2 / 2), the mean of the shifted label R + 1 times p_c.

    ``shifted=False`` subtracts the +1 shift (floored at 0) to report
    revenue in original currency; allocation should use the default.
    """
    mean = np.exp(triple.mu + triple.sigma ** 2 / 2.0)
    if not shifted:
        mean = np.maximum(mean - 1.0, 0.0)
    out = triple.p_c * mean
    return out if out.size > 1 else float(out[0])


def esj_gradient(batch, model: PredictorModel, epsilon=0.0):
    """Gradient of the ESJ loss over ``batch`` for every parameter array."""
    x = np.hstack([batch.customer_features, batch.fund_features])
    return model.loss_and_gradient(x, batch.y, batch.revenue, "esj", epsilon)[1]


def predict_matrix(model: PredictorModel, customer_features, fund_features,
                   risk_tolerance=None, risk_level=None, shifted=True,
                   chunk=65536) -> RevenueMatrix:
    """Expected revenue for every (customer, fund) pair, risk-masked when levels are given."""
    cust = np.atleast_2d(np.asarray(customer_features, dtype=np.float64))
    fund = np.atleast_2d(np.asarray(fund_features, dtype=np.float64))
    if cust.shape[1] != model.customer_dim or fund.shape[1] != model.fund_dim:
        raise ConfigError(
            "DIM_MISMATCH",
            f"model expects {model.customer_dim}+{model.fund_dim} features, "
            f"got {cust.shape[1]}+{fund.shape[1]}",
        )
    n, m = len(cust), len(fund)
    values = np.empty(n * m)
    rows_per_chunk = max(1, chunk // max(m, 1))
    for start in range(0, n, rows_per_chunk):
        block = cust[start:start + rows_per_chunk]
        pairs = np.hstack([np.repeat(block, m, axis=0), np.tile(fund, (len(block), 1))])
        values[start * m:(start + len(block)) * m] = np.atleast_1d(
            expected_revenue(model.forward(pairs), shifted))
    revenue = RevenueMatrix.dense(values.reshape(n, m))
    if risk_tolerance is not None and risk_level is not None:
        revenue = apply_risk_mask(revenue, risk_tolerance, risk_level)
    return revenue
