"""Manual-priority baseline: fill funds one at a time in a fixed priority order."""

from __future__ import annotations

import time

import numpy as np

from ..domain import AllocationInstance, AllocationResult
from ..errors import ConfigError, InfeasibleError
from .feasibility import MAX_FUNDS, ResidualFeasibility
from .heuristic import SolverStats, _require_valid, consumption_rates


def default_priority(instance: AllocationInstance):
    """Funds by descending initial consumption rate, ties to the lower index."""
    rates = consumption_rates(instance.revenue, instance.demand)
    alpha = np.where(rates.defined, rates.alpha, -np.inf)
    idx = np.arange(instance.n_funds)
    return idx[np.lexsort((idx, -alpha))]


def allocate_manual(instance: AllocationInstance, priority=None, guard=True):
    """Expose each fund, in priority order, to its d_f highest-revenue customers.

    ``priority`` is a permutation of fund indices.  A customer stops being a
    candidate once it holds K funds.  With ``guard`` a customer is skipped if
    taking it would leave the remaining funds unfillable.
    """
    start = time.perf_counter()
    _require_valid(instance)
    n, m = instance.n_customers, instance.n_funds
    if priority is None:
        priority = default_priority(instance)
    priority = [int(f) for f in priority]
    if sorted(priority) != list(range(m)):
        raise ConfigError("INVALID_CONFIG", f"priority {priority} is not a permutation of {m} funds")

    values = instance.revenue.values
    elig = instance.revenue.eligible
    k = instance.k
    need = np.full(n, k, dtype=np.int64)
    x = np.zeros((n, m), dtype=bool)
    tracker = None
    if guard and m <= MAX_FUNDS:
        tracker = ResidualFeasibility(elig, instance.demand, need)

    idx = np.arange(n)
    for f in priority:
        want = int(instance.demand[f])
        if want == 0:
            continue
        cands = np.flatnonzero(elig[:, f] & (need > 0))
        cands = cands[np.lexsort((idx[cands], -values[cands, f]))]
        pos = 0
        while want and pos < len(cands):
            batch = cands[pos:pos + want]
            take = len(batch)
            if tracker is not None:
                bad = tracker.first_violation(batch, np.full(take, 1 << f), np.ones(take, dtype=np.int64))
                if bad is not None:
                    take = bad
                tracker.commit(batch[:take], np.full(take, 1 << f), np.ones(take, dtype=np.int64))
            x[batch[:take], f] = True
            need[batch[:take]] -= 1
            want -= take
            # a skipped customer stays infeasible for this fund for good
            pos += take + (take < len(batch))
        if want:
            raise InfeasibleError(
                "INFEASIBLE_DURING_ALLOCATION",
                f"fund {int(instance.fund_ids[f])} short of {want} customers",
                partial=x.copy(),
            )

    result = AllocationResult.from_assignment(x, instance.revenue)
    stats = SolverStats("manual", time.perf_counter() - start, 0, result.objective)
    return result, stats
