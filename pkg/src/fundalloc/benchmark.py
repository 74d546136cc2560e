"""Objective / gap / wall-time comparison of allocators across instance sizes."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .optimizer import solve
from .synth import GeneratorConfig, generate_instance

DEFAULT_SCALES = (1000, 5000, 20000)
DEFAULT_SOLVERS = ("ha-eq8", "manual", "exact-flow")
FIELDS = ("scale", "solver", "objective", "gap", "wall_ms", "rounds")


@dataclass(frozen=True)
class BenchmarkRow:
    scale: int
    solver: str
    objective: float
    gap: float
    wall_ms: float
    rounds: int

    def as_dict(self):
        return {f: getattr(self, f) for f in FIELDS}


def check_scales(scales):
    scales = [int(s) for s in scales]
    if not scales or any(s < 1 for s in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
        raise ConfigError("INVALID_CONFIG", f"scales must be positive and strictly increasing, got {scales}")
    return scales


def run_benchmark(scales=DEFAULT_SCALES, n_funds=8, k=1, seed=0, solvers=DEFAULT_SOLVERS,
                  reference="exact-flow"):
    """One seeded instance per scale; gap is 1 - objective / reference objective."""
    rows = []
    for scale in check_scales(scales):
        inst, _ = generate_instance(GeneratorConfig(n_customers=scale, n_funds=n_funds, k=k,
                                                    seed=seed))
        runs = {name: solve(inst, name) for name in solvers}
        if reference not in runs:
            runs[reference] = solve(inst, reference)
        best = runs[reference][0].objective
        for name in solvers:
            result, stats = runs[name]
            gap = 1.0 - result.objective / best if best > 0 else 0.0
            rows.append(BenchmarkRow(scale, name, result.objective, gap,
                                     stats.wall_time * 1000.0, stats.rounds))
    return rows
