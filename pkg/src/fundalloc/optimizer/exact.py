"""Exact allocation oracles.

``allocate_exact_bruteforce`` searches the full assignment space of tiny
instances.  ``allocate_exact_flow`` solves K=1 instances of any size as a
min-cost flow (source -> customer cap 1, customer -> eligible fund cap 1
with cost -E, fund -> sink cap d_f) by successive shortest augmenting paths.
"""

from __future__ import annotations

import heapq
from functools import lru_cache
from itertools import combinations

import numpy as np

from ..domain import AllocationInstance, AllocationResult
from ..errors import ConfigError, InfeasibleError

BRUTEFORCE_MAX_CUSTOMERS = 10
BRUTEFORCE_MAX_FUNDS = 4


def allocate_exact_bruteforce(instance: AllocationInstance) -> AllocationResult:
    """Globally optimal assignment by exhaustive search over per-customer fund sets.

    Branches that share the same residual fund demand are evaluated once.
    Among optimal assignments the one whose per-customer sorted fund tuples
    are lexicographically smallest is returned.
    """
    n, m, k = instance.n_customers, instance.n_funds, instance.k
    if n > BRUTEFORCE_MAX_CUSTOMERS or m > BRUTEFORCE_MAX_FUNDS:
        raise ConfigError(
            "TOO_LARGE",
            f"{n}x{m} exceeds the {BRUTEFORCE_MAX_CUSTOMERS}x{BRUTEFORCE_MAX_FUNDS} enumeration guard",
        )
    demand = tuple(int(d) for d in instance.demand)
    if sum(demand) != k * n:
        raise InfeasibleError("INFEASIBLE", "fund demands do not sum to K*|U|")
    values = instance.revenue.values
    elig = instance.revenue.eligible
    options = []
    for u in range(n):
        opts = []
        for combo in combinations(np.flatnonzero(elig[u]).tolist(), k):
            opts.append((combo, sum(float(values[u, f]) for f in combo)))
        options.append(opts)

    @lru_cache(maxsize=None)
    def best(i, rem):
        if i == n:
            return 0.0 if not any(rem) else -np.inf
        top = -np.inf
        for combo, gain in options[i]:
            if all(rem[f] > 0 for f in combo):
                nxt = list(rem)
                for f in combo:
                    nxt[f] -= 1
                top = max(top, gain + best(i + 1, tuple(nxt)))
        return top

    total = best(0, demand)
    if total == -np.inf:
        raise InfeasibleError("INFEASIBLE", "no assignment satisfies all constraints")
    x = np.zeros((n, m), dtype=bool)
    rem = demand
    for i in range(n):
        target = best(i, rem)
        for combo, gain in options[i]:
            if not all(rem[f] > 0 for f in combo):
                continue
            nxt = list(rem)
            for f in combo:
                nxt[f] -= 1
            nxt = tuple(nxt)
            if gain + best(i + 1, nxt) == target:
                x[i, list(combo)] = True
                rem = nxt
                break
    best.cache_clear()
    return AllocationResult.from_assignment(x, instance.revenue)


class _FundExchange:
    """Residual graph of a partial K=1 assignment, compressed onto funds.

    Moving customer v from fund a to fund b gains E[v, b] - E[v, a]; for each
    ordered pair (a, b) a lazy max-heap keeps the best such v.
    """

    def __init__(self, values, eligible):
        self.values = values
        self.eligible = eligible
        n, m = values.shape
        self.m = m
        self.where = np.full(n, -1, dtype=np.int64)
        self.stamp = np.zeros(n, dtype=np.int64)
        self.heaps = [[[] for _ in range(m)] for _ in range(m)]
        self.gain = np.full((m, m), -np.inf)
        self.dirty = set()

    def place(self, v, b):
        self.where[v] = b
        self.stamp[v] += 1
        s = int(self.stamp[v])
        row = self.values[v]
        base = row[b]
        heaps = self.heaps[b]
        for c in np.flatnonzero(self.eligible[v]).tolist():
            if c != b:
                heapq.heappush(heaps[c], (base - row[c], v, s))
        self.dirty.add(b)

    def move(self, v, b):
        self.dirty.add(int(self.where[v]))
        self.place(v, b)

    def _top(self, a, b):
        heap = self.heaps[a][b]
        while heap:
            _, v, s = heap[0]
            if self.where[v] == a and self.stamp[v] == s:
                return v
            heapq.heappop(heap)
        return -1

    def refresh(self):
        for a in self.dirty:
            for b in range(self.m):
                if b != a:
                    heap = self.heaps[a][b]
                    v = self._top(a, b)
                    self.gain[a, b] = -heap[0][0] if v >= 0 else -np.inf
        self.dirty.clear()

    def best_mover(self, a, b):
        return self._top(a, b)


def allocate_exact_flow(instance: AllocationInstance) -> AllocationResult:
    """Optimal K=1 assignment via successive shortest paths on the fund-exchange graph.

    Customers are inserted one at a time.  Each insertion augments along the
    best path ``u -> f_1 -> v_1 -> f_2 -> ... -> f_z -> sink`` where each
    ``v_i`` is relocated from f_i to f_{i+1} and f_z still has capacity.  The
    current assignment is always optimal for the customers inserted so far,
    so the exchange graph has no positive cycles and Bellman-Ford over the
    funds finds that path.
    """
    if instance.k != 1:
        raise ConfigError("UNSUPPORTED_K", f"flow oracle is exact only for K=1, got K={instance.k}")
    values = instance.revenue.values
    elig = instance.revenue.eligible
    n, m = values.shape
    capacity = instance.demand.astype(np.int64).copy()
    if int(capacity.sum()) != n:
        raise InfeasibleError("INFEASIBLE", "fund demands do not sum to |U|")
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    tol = 1e-12 * scale
    graph = _FundExchange(values, elig)
    funds = np.arange(m)

    for u in range(n):
        dist = np.where(elig[u], values[u], -np.inf)
        pred = np.full(m, -1, dtype=np.int64)
        graph.refresh()
        gain = graph.gain
        for _ in range(m - 1):
            cand = dist[:, None] + gain
            src = np.argmax(cand, axis=0)
            best = cand[src, funds]
            better = best > dist + tol
            if not better.any():
                break
            dist = np.where(better, best, dist)
            pred = np.where(better, src, pred)
        open_dist = np.where(capacity > 0, dist, -np.inf)
        z = int(np.argmax(open_dist))
        if open_dist[z] == -np.inf:
            raise InfeasibleError(
                "INFEASIBLE",
                f"max flow < |U|: customer {int(instance.customer_ids[u])} cannot be placed",
            )
        path = [z]
        while pred[path[-1]] >= 0:
            path.append(int(pred[path[-1]]))
            if len(path) > m:
                raise RuntimeError("cycle in augmenting path")
        path.reverse()
        movers = [graph.best_mover(a, b) for a, b in zip(path[:-1], path[1:])]
        for v, b in zip(movers, path[1:]):
            graph.move(v, b)
        graph.place(u, path[0])
        capacity[z] -= 1

    x = np.zeros((n, m), dtype=bool)
    x[np.arange(n), graph.where] = True
    return AllocationResult.from_assignment(x, instance.revenue)
