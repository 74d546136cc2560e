"""Heuristic allocation (HA): regret-ordered greedy with consumption-rate weights.

Customers are served in descending order of a heuristic score measuring how
much revenue is lost if they miss their preferred funds; the score weights
each preference gap by the consumption rate of the fund that would be lost.
Scores are recomputed whenever a fund's exposure demand is exhausted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..domain import AllocationInstance, AllocationResult, RevenueMatrix, validate_instance
from ..errors import ConfigError, InfeasibleError
from .feasibility import MAX_FUNDS, ResidualFeasibility

VARIANTS = ("eq8", "top3")
_WINDOW = 8192


@dataclass(frozen=True)
class ConsumptionRates:
    """Per-fund consumption rate; ``defined[f]`` is False for exhausted funds."""

    alpha: np.ndarray
    defined: np.ndarray

    def __getitem__(self, f):
        if not self.defined[f]:
            raise ConfigError("ZERO_DEMAND", f"fund {f} has no remaining demand")
        return float(self.alpha[f])

    def __len__(self):
        return len(self.alpha)


@dataclass(frozen=True)
class HeuristicScores:
    customers: np.ndarray
    h: np.ndarray

    def as_dict(self):
        return dict(zip(self.customers.tolist(), self.h.tolist()))


@dataclass
class SolverStats:
    solver: str
    wall_time: float = 0.0
    rounds: int = 0
    objective: float = 0.0
    gap: float | None = None

    def with_oracle(self, oracle_objective):
        if oracle_objective > 0:
            self.gap = 1.0 - self.objective / oracle_objective
        return self

    def to_record(self):
        return {
            "schema": 1,
            "solver": self.solver,
            "objective": self.objective,
            "wall_ms": self.wall_time * 1000.0,
            "rounds": self.rounds,
            "gap": self.gap,
        }


def _alpha(values, avail, remaining):
    totals = np.where(avail, values, 0.0).sum(axis=0)
    defined = remaining > 0
    alpha = np.zeros(values.shape[1])
    alpha[defined] = totals[defined] / remaining[defined]
    return alpha, defined


def consumption_rates(revenue: RevenueMatrix, remaining_demand, unallocated=None,
                      active=None) -> ConsumptionRates:
    """alpha_f = (sum of eligible E[u, f] over unallocated u) / remaining d_f."""
    d = np.asarray(remaining_demand, dtype=np.int64)
    if d.shape != (revenue.shape[1],):
        raise ConfigError("DIM_MISMATCH", "remaining_demand must have one entry per fund")
    avail = revenue.eligible
    if unallocated is not None:
        avail = avail & np.asarray(unallocated, dtype=bool)[:, None]
    if active is not None:
        d = np.where(active, d, 0)
    alpha, defined = _alpha(revenue.values, avail, d)
    return ConsumptionRates(alpha, defined)


def _rank(values, avail):
    """Per-row fund order by descending value, ties to lower index, unavailable last."""
    key = np.where(avail, -values, np.inf)
    rank = np.argsort(key, axis=1, kind="stable")
    return rank, avail.sum(axis=1)


def _score(values, avail, alpha, k, variant, rank=None, count=None):
    if rank is None:
        rank, count = _rank(values, avail)
    sv = np.take_along_axis(values, rank, axis=1)
    ok = np.take_along_axis(avail, rank, axis=1)
    sa = alpha[rank]
    sv = np.where(ok, sv, 0.0)
    if sv.shape[1] > 1:
        gaps = np.where(ok[:, 1:], sa[:, :-1] * (sv[:, :-1] - sv[:, 1:]), 0.0)
        h = gaps.sum(axis=1)
    else:
        h = np.zeros(sv.shape[0])
    if variant == "top3" and sv.shape[1] >= 3:
        three = count >= 3
        legacy = (sa[:, 0] + sa[:, 1]) / 2.0 * (2.0 * sv[:, 0] - sv[:, 1] - sv[:, 2])
        h = np.where(three, legacy, h)
    # no choice left: must be served before its funds run out
    h = np.where(count <= k, np.inf, h)
    return h, rank, count


def _check_scoring_args(revenue, rates, unallocated, active):
    n, m = revenue.shape
    cust = np.arange(n) if unallocated is None else np.asarray(unallocated)
    if cust.dtype == bool:
        cust = np.flatnonzero(cust)
    avail = revenue.eligible[cust] & rates.defined[None, :]
    if active is not None:
        avail &= np.asarray(active, dtype=bool)[None, :]
    empty = np.flatnonzero(~avail.any(axis=1))
    if empty.size:
        raise ConfigError("NO_ELIGIBLE_FUND", f"customer {int(cust[empty[0]])} has no eligible fund")
    return cust, avail


def heuristic_scores(revenue: RevenueMatrix, rates: ConsumptionRates, unallocated=None,
                     active=None, k=1) -> HeuristicScores:
    """Sum over consecutive ranked funds of alpha(better) * (E_better - E_next).

    Customers with no more than ``k`` eligible funds get ``+inf``.
    """
    cust, avail = _check_scoring_args(revenue, rates, unallocated, active)
    h, _, _ = _score(revenue.values[cust], avail, rates.alpha, k, "eq8")
    return HeuristicScores(cust, h)


def heuristic_scores_top3(revenue: RevenueMatrix, rates: ConsumptionRates, unallocated=None,
                          active=None, k=1) -> HeuristicScores:
    """Legacy score (alpha_a + alpha_b)/2 * (2E_a - E_b - E_c) over the top three funds.

    Falls back to :func:`heuristic_scores` for customers with fewer than three options.
    """
    cust, avail = _check_scoring_args(revenue, rates, unallocated, active)
    h, _, _ = _score(revenue.values[cust], avail, rates.alpha, k, "top3")
    return HeuristicScores(cust, h)


def _require_valid(instance):
    report = validate_instance(instance)
    if not report.feasible_necessary:
        raise ConfigError("INVALID_INSTANCE", "; ".join(m for _, m in report.violations))


def allocate_ha(instance: AllocationInstance, variant="eq8", lazy=False, guard=True):
    """Run the heuristic allocator.

    Parameters
    ----------
    variant : {"eq8", "top3"}
        Adjacent-gap score over all eligible funds, or the legacy top-3 score.
    lazy : bool
        On fund exhaustion re-sort the fund preferences only of customers
        that could use an exhausted fund; every score is still refreshed,
        so the result is identical to the default mode.
    guard : bool
        Refuse any choice that would make the remaining problem infeasible,
        falling back to the customer's best feasible fund set.  Only
        available for up to 16 funds; silently off above that.

    Returns
    -------
    (AllocationResult, SolverStats)
    """
    if variant not in VARIANTS:
        raise ConfigError("INVALID_CONFIG", f"unknown variant {variant!r}")
    start = time.perf_counter()
    _require_valid(instance)
    values = instance.revenue.values
    elig = instance.revenue.eligible
    n, m = values.shape
    k = instance.k

    remaining = instance.demand.copy()
    active = remaining > 0
    unalloc = np.ones(n, dtype=bool)
    x = np.zeros((n, m), dtype=bool)
    tracker = None
    if guard and m <= MAX_FUNDS:
        tracker = ResidualFeasibility(elig, remaining, np.full(n, k))

    h_all = np.zeros(n)
    rank_all = np.zeros((n, m), dtype=np.int64)
    count_all = np.zeros(n, dtype=np.int64)

    def rescore(resort):
        rest = np.flatnonzero(unalloc)
        if rest.size:
            alpha, _ = _alpha(values, elig & unalloc[:, None] & active[None, :],
                              np.where(active, remaining, 0))
            avail = elig[rest] & active[None, :]
            rank = count = None
            if resort is not None:
                # rankings of customers untouched by the exhaustion are still valid
                stale = ~resort[rest]
                rank, count = rank_all[rest], count_all[rest]
                fresh, fresh_count = _rank(values[rest[~stale]], avail[~stale])
                rank[~stale] = fresh
                count[~stale] = fresh_count
            h, rank, count = _score(values[rest], avail, alpha, k, variant, rank, count)
            h_all[rest] = h
            rank_all[rest] = rank
            count_all[rest] = count
        rest = np.flatnonzero(unalloc)
        return rest[np.lexsort((rest, -h_all[rest]))]

    bits = (1 << np.arange(m)).astype(np.int64)

    def commit(users, chosen):
        x[users[:, None], chosen] = True
        unalloc[users] = False
        np.subtract.at(remaining, chosen.ravel(), 1)
        if tracker is not None:
            tracker.commit(users, bits[chosen].sum(axis=1), np.full(len(users), k))

    order = rescore(None)
    rounds = 0
    pos = 0
    while pos < len(order):
        # customers up to the next fund exhaustion keep their current top-k;
        # take them as one batch, exactly as a one-by-one pass would
        seg = order[pos:pos + _WINDOW]
        short = np.flatnonzero(count_all[seg] < k)
        stop = len(seg) if not short.size else int(short[0])
        blocked = bool(short.size)
        chosen = rank_all[seg[:stop], :k]
        if stop:
            hits = np.zeros((stop, m), dtype=np.int64)
            np.put_along_axis(hits, chosen, 1, axis=1)
            full = np.cumsum(hits, axis=0) >= remaining[None, :]
            full &= active[None, :]
            first = np.flatnonzero(full.any(axis=1))
            if first.size:
                stop = int(first[0]) + 1
                chosen = chosen[:stop]
                blocked = False
        reject = None
        if tracker is not None and stop:
            reject = tracker.first_violation(seg[:stop], bits[chosen].sum(axis=1), np.full(stop, k))
            if reject is not None:
                stop = reject
                blocked = False
                chosen = chosen[:stop]
        commit(seg[:stop], chosen)
        pos += stop
        if reject is not None:
            u = int(seg[reject])
            fallback = tracker.best_feasible_set(u, rank_all[u, :count_all[u]], values[u], k)
            if fallback is None:
                raise InfeasibleError(
                    "INFEASIBLE_DURING_ALLOCATION",
                    f"no feasible fund set left for customer {int(instance.customer_ids[u])}",
                    partial=x.copy(),
                )
            commit(np.array([u]), fallback[None, :])
            pos += 1
        elif blocked:
            u = int(seg[stop])
            raise InfeasibleError(
                "INFEASIBLE_DURING_ALLOCATION",
                f"customer {int(instance.customer_ids[u])} has {int(count_all[u])} funds "
                f"with capacity, needs {k}",
                partial=x.copy(),
            )
        exhausted = np.flatnonzero(active & (remaining == 0))
        if exhausted.size:
            active[exhausted] = False
            rounds += 1
            order = rescore(elig[:, exhausted].any(axis=1) if lazy else None)
            pos = 0

    result = AllocationResult.from_assignment(x, instance.revenue)
    stats = SolverStats(f"ha-{variant}", time.perf_counter() - start, rounds, result.objective)
    return result, stats
