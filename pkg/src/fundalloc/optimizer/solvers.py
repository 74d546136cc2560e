"""Uniform entry point over every allocator, plus an estimator-style wrapper."""

from __future__ import annotations

import time

from sklearn.base import BaseEstimator

from ..domain import AllocationInstance, is_feasible
from ..errors import ConfigError, InfeasibleError
from .exact import allocate_exact_bruteforce, allocate_exact_flow
from .heuristic import SolverStats, allocate_ha
from .manual import allocate_manual

SOLVERS = ("ha-eq8", "ha-top3", "manual", "exact-bf", "exact-flow")


def solve(instance: AllocationInstance, solver="ha-eq8", priority=None, lazy=False, guard=True):
    """Run ``solver`` and return (AllocationResult, SolverStats)."""
    if solver not in SOLVERS:
        raise ConfigError("INVALID_CONFIG", f"solver must be one of {SOLVERS}, got {solver!r}")
    if priority is not None and solver != "manual":
        raise ConfigError("INVALID_CONFIG", "a priority order only applies to the manual solver")
    if solver.startswith("ha-"):
        return allocate_ha(instance, variant=solver[3:], lazy=lazy, guard=guard)
    if solver == "manual":
        return allocate_manual(instance, priority=priority, guard=guard)
    start = time.perf_counter()
    run = allocate_exact_bruteforce if solver == "exact-bf" else allocate_exact_flow
    result = run(instance)
    return result, SolverStats(solver, time.perf_counter() - start, 0, result.objective, 0.0)


class AllocationSolver(BaseEstimator):
    """Estimator-style wrapper: ``solve(instance)`` stores ``result_`` and ``stats_``.

    Allocation has no training step, so ``fit`` is an alias of ``solve`` and
    ``predict`` returns the boolean assignment of the last solved instance.
    """

    def __init__(self, solver="ha-eq8", priority=None, lazy=False, guard=True):
        self.solver = solver
        self.priority = priority
        self.lazy = lazy
        self.guard = guard

    def solve(self, instance: AllocationInstance):
        if not isinstance(instance, AllocationInstance):
            raise ConfigError("INVALID_CONFIG", "solve expects an AllocationInstance")
        self.result_, self.stats_ = solve(instance, self.solver, self.priority, self.lazy, self.guard)
        if not is_feasible(self.result_.assignment, instance):
            raise InfeasibleError("INFEASIBLE_OUTPUT", f"{self.solver} produced an infeasible allocation")
        return self

    def fit(self, instance, y=None):
        return self.solve(instance)

    def predict(self, instance=None):
        if not hasattr(self, "result_"):
            raise ConfigError("NOT_FITTED", "call solve() first")
        return self.result_.assignment

    def score(self, instance=None, y=None):
        return self.result_.objective
