"""Optimal node-subset search per face: GA over fixed-size index sets with
RBF max-interpolation-error fitness, run in two stages (per load case, then
over the pooled candidates against all cases)."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, replace

import numpy as np

from . import kernels, rbf
from .domain import Face, HTCField
from .iotools import read_json, write_json
from .seeding import mix_seed


@dataclass(frozen=True)
class NodeSubset:
    """A candidate subset of node indices (into ``Face.nodes``) with its fitness."""

    face_id: int
    members: tuple[int, ...]
    fitness: float | None = None

    def __post_init__(self):
        members = tuple(int(i) for i in self.members)
        if len(members) == 0:
            raise ValueError("a subset needs at least one member")
        if any(i < 0 for i in members):
            raise ValueError("members must be non-negative node indices")
        if any(b <= a for a, b in zip(members, members[1:])):
            raise ValueError("members must be sorted ascending without duplicates")
        object.__setattr__(self, "members", members)

    @property
    def m(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class GAParams:
    population_size: int = 50
    generations: int = 200
    crossover_prob: float = 0.9
    mutation_prob: float = 0.05
    tournament_size: int = 2
    elitism_count: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2")
        if not 0 <= self.elitism_count < self.population_size:
            raise ValueError("elitism_count must lie in [0, population_size)")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "crossover_prob": self.crossover_prob,
            "mutation_prob": self.mutation_prob,
            "tournament_size": self.tournament_size,
            "elitism_count": self.elitism_count,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GAParams":
        return cls(**d)


def _check_fields(face: Face, fields) -> list[HTCField]:
    fields = list(fields)
    if not fields:
        raise ValueError("at least one HTC field is required")
    for f in fields:
        if f.face_id != face.face_id:
            raise ValueError(f"field for face {f.face_id} passed with face {face.face_id}")
        if f.values.shape[0] != face.n_nodes:
            raise ValueError("field length does not match face node count")
    return fields


def fitness(
    subset: NodeSubset,
    face: Face,
    fields,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float = 0.0,
) -> float:
    """Worst max-norm interpolation error over the supplied fields.

    For each field the subset's nodes carry an RBF interpolant which is
    evaluated at all N face nodes; the fitness is the largest pointwise
    deviation seen. Subsets whose system cannot be solved score +inf.
    """
    fields = _check_fields(face, fields)
    members = np.asarray(subset.members, dtype=np.intp)
    if members[-1] >= face.n_nodes:
        raise ValueError("subset members exceed the face node count")
    centers = face.positions[members]
    try:
        fact = rbf.factorize(centers, kernel=kernel, shape_eps=shape_eps, ridge=ridge)
        cross = kernels.kernel_matrix(
            face.positions, centers, fact.shape_eps, kernels.KERNEL_IDS[kernel]
        )
        worst = 0.0
        for f in fields:
            coeffs = rbf.solve_coeffs(fact, f.values[members])
            err = float(np.max(np.abs(cross @ coeffs - f.values)))
            worst = max(worst, err)
        return worst
    except rbf.RBFFitError:
        return math.inf


class _FitnessCache:
    """Memoized fitness for one (face, fields, rbf-options) context."""

    def __init__(self, face, fields, kernel, shape_eps, ridge):
        self.face = face
        self.fields = fields
        self.kernel = kernel
        self.shape_eps = shape_eps
        self.ridge = ridge
        self._values: dict[tuple[int, ...], float] = {}

    def __call__(self, members: tuple[int, ...]) -> float:
        got = self._values.get(members)
        if got is None:
            got = fitness(
                NodeSubset(self.face.face_id, members),
                self.face,
                self.fields,
                kernel=self.kernel,
                shape_eps=self.shape_eps,
                ridge=self.ridge,
            )
            self._values[members] = got
        return got


def _tournament(rng, population, scores, size):
    best = None
    for _ in range(size):
        cand = population[rng.randrange(len(population))]
        if best is None or (scores[cand], cand) < (scores[best], best):
            best = cand
    return best


def _crossover(rng, p1, p2, m):
    union = sorted(set(p1) | set(p2))
    return tuple(sorted(rng.sample(union, m)))


def _mutate(rng, members, candidates, mutation_prob):
    members = list(members)
    current = set(members)
    for i in range(len(members)):
        if rng.random() < mutation_prob:
            pool = [c for c in candidates if c not in current]
            if not pool:
                continue
            new = pool[rng.randrange(len(pool))]
            current.discard(members[i])
            current.add(new)
            members[i] = new
    return tuple(sorted(members))


def ga_search(
    face: Face,
    fields,
    m: int,
    params: GAParams,
    candidates=None,
    seed_population=None,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float = 0.0,
    on_generation=None,
) -> NodeSubset:
    """Genetic search for the m-subset minimizing the fitness, best-ever kept.

    ``candidates`` restricts the searchable node indices (used by stage 2);
    ``seed_population`` injects known-good subsets into the initial population;
    ``on_generation(index, best_fitness)`` observes the best-so-far trajectory.
    """
    fields = _check_fields(face, fields)
    if candidates is None:
        candidates = list(range(face.n_nodes))
    else:
        candidates = sorted(set(int(c) for c in candidates))
        if candidates and (candidates[0] < 0 or candidates[-1] >= face.n_nodes):
            raise ValueError("candidates out of range for this face")
    if not 1 <= m <= len(candidates):
        raise ValueError(f"m={m} infeasible with {len(candidates)} candidate nodes")

    score = _FitnessCache(face, fields, kernel, shape_eps, ridge)
    if m == len(candidates):
        members = tuple(candidates)
        return NodeSubset(face.face_id, members, fitness=score(members))

    rng = random.Random(params.rng_seed)
    population: list[tuple[int, ...]] = []
    if seed_population:
        for s in seed_population:
            members = tuple(sorted(int(i) for i in s))
            if len(members) == m and set(members) <= set(candidates) and members not in population:
                population.append(members)
    while len(population) < params.population_size:
        population.append(tuple(sorted(rng.sample(candidates, m))))
    population = population[: params.population_size]

    scores = {ind: score(ind) for ind in population}
    best = min(population, key=lambda ind: (scores[ind], ind))

    for gen in range(params.generations):
        ranked = sorted(population, key=lambda ind: (scores[ind], ind))
        next_pop = ranked[: params.elitism_count]
        while len(next_pop) < params.population_size:
            p1 = _tournament(rng, population, scores, params.tournament_size)
            if rng.random() < params.crossover_prob:
                p2 = _tournament(rng, population, scores, params.tournament_size)
                child = _crossover(rng, p1, p2, m)
            else:
                child = p1
            child = _mutate(rng, child, candidates, params.mutation_prob)
            next_pop.append(child)
        population = next_pop
        for ind in population:
            if ind not in scores:
                scores[ind] = score(ind)
        gen_best = min(population, key=lambda ind: (scores[ind], ind))
        if (scores[gen_best], gen_best) < (scores[best], best):
            best = gen_best
        if on_generation is not None:
            on_generation(gen, scores[best])

    return NodeSubset(face.face_id, best, fitness=scores[best])


def brute_force_subset(
    face: Face,
    fields,
    m: int,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float = 0.0,
    budget: int = 10**6,
) -> NodeSubset:
    """Exact minimizer by exhaustive enumeration; ties go to the
    lexicographically smallest member list."""
    fields = _check_fields(face, fields)
    n = face.n_nodes
    if not 1 <= m <= n:
        raise ValueError(f"m={m} infeasible for an {n}-node face")
    n_subsets = math.comb(n, m)
    if n_subsets > budget:
        raise ValueError(f"C({n},{m}) = {n_subsets} exceeds the {budget} subset budget")

    best_members = None
    best_fit = math.inf
    for comb in itertools.combinations(range(n), m):
        fit = fitness(
            NodeSubset(face.face_id, comb), face, fields,
            kernel=kernel, shape_eps=shape_eps, ridge=ridge,
        )
        if fit < best_fit:
            best_fit = fit
            best_members = comb
    return NodeSubset(face.face_id, best_members, fitness=best_fit)


def two_stage_cluster(
    face: Face,
    fields_by_case,
    m: int,
    params: GAParams,
    kernel: str = "gaussian",
    shape_eps: float | None = None,
    ridge: float = 0.0,
) -> NodeSubset:
    """Per-case GA searches, then a pooled search scored against all cases.

    Stage 1 finds an optimal subset per load case (seeded deterministically
    per case). Stage 2 restricts the search to the union of stage-1 members
    and minimizes the worst error over all cases; if the pool is no larger
    than m it is padded greedily by best max-error reduction instead.
    """
    fields = _check_fields(face, fields_by_case)
    rbf_opts = dict(kernel=kernel, shape_eps=shape_eps, ridge=ridge)

    # One seed for every per-case search: identical fields then yield
    # identical stage-1 subsets; trajectories diverge through fitness alone.
    p1 = replace(params, rng_seed=mix_seed(params.rng_seed, 1))
    stage1 = [ga_search(face, [f], m, p1, **rbf_opts) for f in fields]

    pool = sorted(set(itertools.chain.from_iterable(s.members for s in stage1)))
    score = _FitnessCache(face, fields, kernel, shape_eps, ridge)

    if len(pool) <= m:
        members = list(pool)
        remaining = [i for i in range(face.n_nodes) if i not in set(members)]
        while len(members) < m:
            ranked = sorted(
                remaining,
                key=lambda cand: (score(tuple(sorted(members + [cand]))), cand),
            )
            chosen = ranked[0]
            members.append(chosen)
            remaining.remove(chosen)
        final = tuple(sorted(members))
        return NodeSubset(face.face_id, final, fitness=score(final))

    p2 = replace(params, rng_seed=mix_seed(params.rng_seed, 2, 0))
    return ga_search(
        face, fields, m, p2,
        candidates=pool,
        seed_population=[s.members for s in stage1],
        **rbf_opts,
    )


def write_subset(subset: NodeSubset, params: GAParams, path) -> None:
    write_json(
        path,
        {
            "face_id": subset.face_id,
            "m": subset.m,
            "members": list(subset.members),
            "fitness": subset.fitness,
            "ga_params": params.to_dict(),
            "seed": params.rng_seed,
        },
    )


def read_subset(path) -> tuple[NodeSubset, GAParams]:
    doc = read_json(path)
    subset = NodeSubset(
        face_id=int(doc["face_id"]),
        members=tuple(doc["members"]),
        fitness=doc["fitness"],
    )
    return subset, GAParams.from_dict(doc["ga_params"])
