"""Brute-force oracles for tests: exact makespan partitioning and exhaustive
subset-fitness tables. Correctness anchors only; budgets keep their cost
explicit."""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import rbf
from .cluster import NodeSubset
from .domain import Face

PARTITION_BUDGET = 10**7
FITNESS_TABLE_BUDGET = 10**4
_CHUNK = 1 << 20


class BudgetExceededError(RuntimeError):
    """The requested instance is too large for exhaustive search."""


def optimal_partition(estimates, k: int) -> tuple[tuple[int, ...], float]:
    """Exact minimal-makespan assignment over all k^n bin labelings.

    Returns (assignment vector, makespan); ties resolve to the
    lexicographically smallest assignment vector.
    """
    est = [float(e) for e in estimates]
    n = len(est)
    if n == 0:
        raise ValueError("estimates must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    total = k**n
    if total > PARTITION_BUDGET:
        raise BudgetExceededError(f"{k}^{n} = {total} assignments exceed the budget")

    weights = np.asarray(est)
    powers = [k ** (n - 1 - t) for t in range(n)]
    best_makespan = math.inf
    best_index = -1
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        loads = np.zeros((idx.size, k))
        rows = np.arange(idx.size)
        for t in range(n):
            digits = (idx // powers[t]) % k
            loads[rows, digits] += weights[t]
        makespans = loads.max(axis=1)
        pos = int(np.argmin(makespans))
        if makespans[pos] < best_makespan:
            best_makespan = float(makespans[pos])
            best_index = start + pos

    assignment = tuple(int((best_index // p) % k) for p in powers)
    return assignment, best_makespan


def exhaustive_fitness_table(
    face: Face,
    fields,
    m: int,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float = 0.0,
) -> dict[tuple[int, ...], float]:
    """Every m-subset's worst-case max interpolation error, sorted ascending.

    Re-derives the error with a per-node scan through ``rbf.evaluate`` so it
    shares only the RBF primitive with the fitness implementation it checks.
    """
    fields = list(fields)
    n = face.n_nodes
    n_subsets = math.comb(n, m)
    if n_subsets > FITNESS_TABLE_BUDGET:
        raise BudgetExceededError(f"C({n},{m}) = {n_subsets} exceeds the budget")

    table: dict[tuple[int, ...], float] = {}
    for comb in itertools.combinations(range(n), m):
        centers = face.positions[list(comb)]
        worst = 0.0
        try:
            for f in fields:
                model = rbf.fit(
                    centers, f.values[list(comb)],
                    kernel=kernel, shape_eps=shape_eps, ridge=ridge,
                )
                for i in range(n):
                    err = abs(float(rbf.evaluate(model, face.positions[i])) - float(f.values[i]))
                    worst = max(worst, err)
        except rbf.RBFFitError:
            worst = math.inf
        table[comb] = worst

    return dict(sorted(table.items(), key=lambda kv: (kv[1], kv[0])))


def min_fitness_subset(table: dict[tuple[int, ...], float], face_id: int) -> NodeSubset:
    """First entry of an exhaustive table as a NodeSubset."""
    members, fit = next(iter(table.items()))
    return NodeSubset(face_id, members, fitness=fit)
