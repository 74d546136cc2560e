"""Core data model: instances, revenue grids, assignments and business metrics.

Instances are stored column-wise (numpy arrays) rather than as lists of
per-entity objects so that solvers can work on 10^5-row problems; the
``Customer``/``Fund`` records are available as views for callers that want
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

DEFAULT_RISK_LEVELS = 5


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Customer:
    id: int
    risk_tolerance: int
    features: tuple = ()


@dataclass(frozen=True)
class Fund:
    id: int
    risk_level: int
    demand: int
    features: tuple = ()


@dataclass(frozen=True, eq=False)
class RevenueMatrix:
    """Expected revenue per (customer, fund) plus an eligibility mask.

    Ineligible cells hold 0.0 in ``values`` and are never read by any
    operation; the mask is the only source of truth.
    """

    values: np.ndarray
    eligible: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigError("DIM_MISMATCH", f"revenue must be 2-D, got shape {values.shape}")
        if self.eligible is None:
            eligible = np.ones(values.shape, dtype=bool)
        else:
            eligible = np.asarray(self.eligible, dtype=bool)
        if eligible.shape != values.shape:
            raise ConfigError(
                "DIM_MISMATCH",
                f"eligibility mask {eligible.shape} does not match values {values.shape}",
            )
        cells = values[eligible]
        if not np.all(np.isfinite(cells)):
            raise ConfigError("INVALID_REVENUE", "eligible revenue cells must be finite")
        if np.any(cells < 0):
            raise ConfigError("INVALID_REVENUE", "eligible revenue cells must be non-negative")
        values = np.where(eligible, values, 0.0)
        object.__setattr__(self, "values", _frozen(values, np.float64))
        object.__setattr__(self, "eligible", _frozen(eligible, bool))

    @classmethod
    def dense(cls, values):
        return cls(values, None)

    @property
    def shape(self):
        return self.values.shape

    def scaled(self, factor):
        return RevenueMatrix(self.values * factor, self.eligible)

    def __eq__(self, other):
        if not isinstance(other, RevenueMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.eligible, other.eligible)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def apply_risk_mask(revenue: RevenueMatrix, risk_tolerance, risk_level) -> RevenueMatrix:
    """Mark (u, f) ineligible wherever the fund is riskier than the customer tolerates."""
    t = np.asarray(risk_tolerance)
    r = np.asarray(risk_level)
    if revenue.shape != (t.shape[0], r.shape[0]):
        raise ConfigError(
            "DIM_MISMATCH",
            f"revenue {revenue.shape} vs {t.shape[0]} customers x {r.shape[0]} funds",
        )
    mask = revenue.eligible & (t[:, None] >= r[None, :])
    return RevenueMatrix(revenue.values, mask)


@dataclass(frozen=True, eq=False)
class AllocationInstance:
    """One guaranteed-delivery allocation problem.

    The risk mask is applied on construction, so ``revenue.eligible`` already
    encodes the platform risk constraint.
    """

    risk_tolerance: np.ndarray
    risk_level: np.ndarray
    demand: np.ndarray
    revenue: RevenueMatrix
    k: int = 1
    customer_ids: np.ndarray = None
    fund_ids: np.ndarray = None
    customer_features: np.ndarray = None
    fund_features: np.ndarray = None
    n_levels: int = DEFAULT_RISK_LEVELS

    def __post_init__(self):
        t = np.asarray(self.risk_tolerance)
        r = np.asarray(self.risk_level)
        d = np.asarray(self.demand)
        n, m = t.shape[0], r.shape[0]
        if t.ndim != 1 or r.ndim != 1 or d.shape != r.shape:
            raise ConfigError("DIM_MISMATCH", "risk/demand vectors have inconsistent shapes")
        if not isinstance(self.revenue, RevenueMatrix):
            raise ConfigError("DIM_MISMATCH", "revenue must be a RevenueMatrix")
        if self.revenue.shape != (n, m):
            raise ConfigError(
                "DIM_MISMATCH", f"revenue {self.revenue.shape} but instance is {n}x{m}"
            )
        for name, arr in (("risk_tolerance", t), ("risk_level", r), ("demand", d)):
            if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
                raise ConfigError("INVALID_CONFIG", f"{name} must be integer valued")
        t = t.astype(np.int64)
        r = r.astype(np.int64)
        d = d.astype(np.int64)
        if np.any(d < 0):
            raise ConfigError("INVALID_CONFIG", "fund demand must be non-negative")
        lo, hi = 1, int(self.n_levels)
        if np.any((t < lo) | (t > hi)) or np.any((r < lo) | (r > hi)):
            raise ConfigError("INVALID_CONFIG", f"risk levels must lie in [1, {hi}]")
        k = int(self.k)
        if k < 1 or k > max(m, 1):
            raise ConfigError("INVALID_CONFIG", f"k={self.k} must be in [1, n_funds={m}]")
        cid = np.arange(n) if self.customer_ids is None else np.asarray(self.customer_ids)
        fid = np.arange(m) if self.fund_ids is None else np.asarray(self.fund_ids)
        if cid.shape != (n,) or fid.shape != (m,):
            raise ConfigError("DIM_MISMATCH", "id vectors must match instance dimensions")
        if len(np.unique(cid)) != n or len(np.unique(fid)) != m:
            raise ConfigError("INVALID_CONFIG", "customer and fund ids must be unique")
        cf = np.zeros((n, 0)) if self.customer_features is None else np.asarray(
            self.customer_features, dtype=np.float64)
        ff = np.zeros((m, 0)) if self.fund_features is None else np.asarray(
            self.fund_features, dtype=np.float64)
        if cf.ndim != 2 or cf.shape[0] != n or ff.ndim != 2 or ff.shape[0] != m:
            raise ConfigError("DIM_MISMATCH", "feature tables must have one row per entity")

        object.__setattr__(self, "risk_tolerance", _frozen(t, np.int64))
        object.__setattr__(self, "risk_level", _frozen(r, np.int64))
        object.__setattr__(self, "demand", _frozen(d, np.int64))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "customer_ids", _frozen(cid, np.int64))
        object.__setattr__(self, "fund_ids", _frozen(fid, np.int64))
        object.__setattr__(self, "customer_features", _frozen(cf, np.float64))
        object.__setattr__(self, "fund_features", _frozen(ff, np.float64))
        object.__setattr__(self, "revenue", apply_risk_mask(self.revenue, t, r))

    @classmethod
    def from_entities(cls, customers: Sequence[Customer], funds: Sequence[Fund],
                      revenue, k=1, n_levels=DEFAULT_RISK_LEVELS):
        if not isinstance(revenue, RevenueMatrix):
            revenue = RevenueMatrix.dense(revenue)
        cf = [c.features for c in customers]
        ff = [f.features for f in funds]
        return cls(
            risk_tolerance=[c.risk_tolerance for c in customers],
            risk_level=[f.risk_level for f in funds],
            demand=[f.demand for f in funds],
            revenue=revenue,
            k=k,
            customer_ids=[c.id for c in customers],
            fund_ids=[f.id for f in funds],
            customer_features=np.array(cf, dtype=np.float64).reshape(len(customers), -1),
            fund_features=np.array(ff, dtype=np.float64).reshape(len(funds), -1),
            n_levels=n_levels,
        )

    @property
    def n_customers(self):
        return self.risk_tolerance.shape[0]

    @property
    def n_funds(self):
        return self.risk_level.shape[0]

    @property
    def customers(self):
        return [
            Customer(int(i), int(t), tuple(row))
            for i, t, row in zip(self.customer_ids, self.risk_tolerance, self.customer_features)
        ]

    @property
    def funds(self):
        return [
            Fund(int(i), int(r), int(d), tuple(row))
            for i, r, d, row in zip(self.fund_ids, self.risk_level, self.demand, self.fund_features)
        ]

    def with_revenue(self, revenue: RevenueMatrix) -> "AllocationInstance":
        return AllocationInstance(
            self.risk_tolerance, self.risk_level, self.demand, revenue, self.k,
            self.customer_ids, self.fund_ids, self.customer_features, self.fund_features,
            self.n_levels,
        )

    def __eq__(self, other):
        if not isinstance(other, AllocationInstance):
            return NotImplemented
        arrays = ("risk_tolerance", "risk_level", "demand", "customer_ids", "fund_ids",
                  "customer_features", "fund_features")
        return (
            self.k == other.k
            and self.n_levels == other.n_levels
            and self.revenue == other.revenue
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AllocationResult:
    assignment: np.ndarray
    objective: float
    fill_counts: np.ndarray

    @classmethod
    def from_assignment(cls, x, revenue: RevenueMatrix) -> "AllocationResult":
        x = np.asarray(x, dtype=bool)
        obj = objective_value(x, revenue)
        return cls(_frozen(x, bool), obj, _frozen(x.sum(axis=0), np.int64))

    def pairs(self):
        """(customer_index, fund_index) for every assigned cell, row-major."""
        u, f = np.nonzero(self.assignment)
        return list(zip(u.tolist(), f.tolist()))


@dataclass(frozen=True)
class ValidationReport:
    feasible_necessary: bool
    violations: tuple = field(default_factory=tuple)
    supply_total: int = 0
    demand_total: int = 0

    @property
    def codes(self):
        return [code for code, _ in self.violations]


def validate_instance(instance: AllocationInstance) -> ValidationReport:
    """Check the necessary (not sufficient) conditions for feasibility.

    Full feasibility is certified only by the exact solvers.
    """
    elig = instance.revenue.eligible
    d = instance.demand
    k = instance.k
    supply = int(d.sum())
    demand = k * instance.n_customers
    violations = []
    if supply != demand:
        violations.append(
            ("SUPPLY_MISMATCH", f"sum of fund demands {supply} != K*|U| = {demand}")
        )
    reachable = elig.sum(axis=0)
    for f in np.flatnonzero(d > reachable):
        violations.append((
            "RISK_STARVED",
            f"fund {int(instance.fund_ids[f])} needs {int(d[f])} customers but only "
            f"{int(reachable[f])} are eligible",
        ))
    options = elig.sum(axis=1)
    for u in np.flatnonzero(options < k):
        violations.append((
            "TOO_FEW_OPTIONS",
            f"customer {int(instance.customer_ids[u])} has {int(options[u])} eligible funds, needs {k}",
        ))
    return ValidationReport(not violations, tuple(violations), supply, demand)


def objective_value(x, revenue: RevenueMatrix) -> float:
    """Total expected revenue of an assignment, summed in row-major index order."""
    x = np.asarray(x, dtype=bool)
    if x.shape != revenue.shape:
        raise ConfigError("DIM_MISMATCH", f"assignment {x.shape} vs revenue {revenue.shape}")
    if np.any(x & ~revenue.eligible):
        u, f = np.argwhere(x & ~revenue.eligible)[0]
        raise ConfigError("ASSIGNED_INELIGIBLE", f"cell ({u}, {f}) is not eligible")
    # np.sum uses pairwise summation; a sequential sum keeps the order fixed
    return float(sum(revenue.values[x].tolist(), 0.0))


def is_feasible(x, instance: AllocationInstance) -> bool:
    x = np.asarray(x)
    if x.shape != instance.revenue.shape:
        raise ConfigError("DIM_MISMATCH", f"assignment {x.shape} vs instance {instance.revenue.shape}")
    if not np.all((x == 0) | (x == 1)):
        return False
    x = x.astype(bool)
    if np.any(x & ~instance.revenue.eligible):
        return False
    if np.any(x.sum(axis=1) != instance.k):
        return False
    return bool(np.array_equal(x.sum(axis=0), instance.demand))


def cpme(conversions, exposures) -> float:
    """Conversions per thousand exposures."""
    if exposures == 0:
        raise ConfigError("ZERO_EXPOSURES", "exposure count must be positive")
    return conversions / exposures * 1000.0


def rpme(revenue_sum, exposures) -> float:
    """Revenue per thousand exposures."""
    if exposures == 0:
        raise ConfigError("ZERO_EXPOSURES", "exposure count must be positive")
    return revenue_sum / exposures * 1000.0
