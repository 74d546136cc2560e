"""Exact residual-feasibility tracking for greedy allocators.

The remaining problem (customers still needing ``need[u]`` distinct funds,
funds still needing ``demand[f]`` customers, unit edges where eligible) is a
bipartite b-matching.  By max-flow/min-cut it is feasible iff the totals
agree and, for every fund subset A,

    sum_{f in A} demand[f] <= sum_u min(need[u], |A & N(u)|)

With at most ``MAX_FUNDS`` funds every subset is enumerated, so the check is
exact for arbitrary eligibility masks, not only risk-threshold ones.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

MAX_FUNDS = 16


def _popcounts(n_bits):
    pop = np.zeros(1 << n_bits, dtype=np.int64)
    for b in range(n_bits):
        pop[1 << b:1 << (b + 1)] = pop[:1 << b] + 1
    return pop


class ResidualFeasibility:
    """Slack of every cut inequality, updated incrementally as cells are fixed."""

    def __init__(self, eligible, demand, need):
        eligible = np.asarray(eligible, dtype=bool)
        n, m = eligible.shape
        if m > MAX_FUNDS:
            raise ValueError(f"subset enumeration limited to {MAX_FUNDS} funds, got {m}")
        self.n_funds = m
        self._subsets = np.arange(1 << m, dtype=np.int64)
        self._pop = _popcounts(m)
        bits = (1 << np.arange(m)).astype(np.int64)
        self._bits = bits
        self.mask = eligible.astype(np.int64) @ bits
        self.need = np.asarray(need, dtype=np.int64).copy()
        demand = np.asarray(demand, dtype=np.int64)

        member = (self._subsets[:, None] & bits[None, :]) != 0
        lhs = member.astype(np.int64) @ demand
        rhs = np.zeros_like(lhs)
        keys = np.stack([self.mask, self.need], axis=1)
        groups, counts = np.unique(keys, axis=0, return_counts=True)
        for (mask, k), c in zip(groups.tolist(), counts.tolist()):
            if k > 0 and mask:
                rhs += c * np.minimum(k, self._pop[self._subsets & mask])
        self.slack = rhs - lhs
        self.balanced = int(self.need.sum()) == int(demand.sum())

    def feasible(self):
        return self.balanced and bool(self.slack.min() >= 0)

    def _selector(self, funds):
        sel = 0
        for f in funds:
            sel |= 1 << int(f)
        return sel

    def _delta(self, u, sel, size):
        mask, k = int(self.mask[u]), int(self.need[u])
        sub = self._subsets
        pop = self._pop
        before = np.minimum(k, pop[sub & mask])
        after = np.minimum(k - size, pop[sub & (mask & ~sel)])
        return after - before + pop[sub & sel]

    def can_assign(self, u, funds):
        """Would fixing ``u -> funds`` keep the remaining problem feasible?"""
        sel = self._selector(funds)
        if sel & ~int(self.mask[u]) or len(funds) > self.need[u]:
            return False
        return bool(np.all(self.slack + self._delta(u, sel, len(funds)) >= 0))

    def assign(self, u, funds):
        sel = self._selector(funds)
        self.slack += self._delta(u, sel, len(funds))
        self.need[u] -= len(funds)
        self.mask[u] &= ~sel

    def _batch_deltas(self, users, sels, sizes):
        """Slack change of each row, grouped: returns (row -> key index, key deltas)."""
        users = np.asarray(users, dtype=np.int64)
        keys = np.stack([self.mask[users], self.need[users],
                         np.asarray(sels, dtype=np.int64), np.asarray(sizes, dtype=np.int64)], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        sub, pop = self._subsets, self._pop
        deltas = np.empty((len(uniq), len(sub)), dtype=np.int64)
        for i, (mask, k, sel, size) in enumerate(uniq.tolist()):
            deltas[i] = (np.minimum(k - size, pop[sub & (mask & ~sel)])
                         - np.minimum(k, pop[sub & mask]) + pop[sub & sel])
        return inverse.reshape(-1), deltas

    def first_violation(self, users, sels, sizes):
        """Index of the first row that cannot be fixed after fixing all rows before it.

        Rows must name distinct customers.  Every row delta is non-positive,
        so slack only shrinks along the sequence and a bisection finds the
        first failing prefix.  Returns None when the whole batch is safe.
        """
        if len(users) == 0:
            return None
        inverse, deltas = self._batch_deltas(users, sels, sizes)
        n_keys = len(deltas)
        total = self.slack + np.bincount(inverse, minlength=n_keys) @ deltas
        if total.min() >= 0:
            return None
        lo, hi = 0, len(users)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            s = self.slack + np.bincount(inverse[:mid], minlength=n_keys) @ deltas
            if s.min() >= 0:
                lo = mid
            else:
                hi = mid
        return lo

    def commit(self, users, sels, sizes):
        if len(users) == 0:
            return
        users = np.asarray(users, dtype=np.int64)
        inverse, deltas = self._batch_deltas(users, sels, sizes)
        self.slack += np.bincount(inverse, minlength=len(deltas)) @ deltas
        self.need[users] -= np.asarray(sizes, dtype=np.int64)
        self.mask[users] &= ~np.asarray(sels, dtype=np.int64)

    def best_feasible_set(self, u, candidates, values, size):
        """Highest-value ``size``-subset of ``candidates`` that keeps feasibility.

        Ties go to the lexicographically smallest sorted index tuple.
        """
        best = None
        for combo in combinations(sorted(int(f) for f in candidates), size):
            total = sum(float(values[f]) for f in combo)
            if best is not None and (total < best[0] or (total == best[0] and combo > best[1])):
                continue
            if self.can_assign(u, combo):
                best = (total, combo)
        return None if best is None else np.array(best[1], dtype=np.int64)


def is_instance_feasible(instance) -> bool:
    """Exact feasibility of a whole instance (requires <= MAX_FUNDS funds)."""
    n = instance.n_customers
    tracker = ResidualFeasibility(
        instance.revenue.eligible, instance.demand, np.full(n, instance.k)
    )
    return tracker.feasible()
