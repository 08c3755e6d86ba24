"""Multi-start and population-based wrappers around the local searches."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Tuple, Union

import numpy as np

from .core import (
    CovarianceModel,
    RngStream,
    RunTrace,
    SearchBudget,
    as_budget,
    as_vector,
    evaluate_batch,
    parallel_map,
)
from .search import greedy_local_search

__all__ = ["Population", "es_n_plus_lambda", "random_restarts"]


@dataclass(frozen=True)
class Population:
    """Points with cached objective values, sorted ascending by value."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if P.shape[0] != v.size or v.size == 0:
            raise ValueError("population needs one value per point and at least one member")
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "points", P[order])
        object.__setattr__(self, "values", v[order])

    @classmethod
    def from_points(cls, f, points) -> "Population":
        P = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(P, evaluate_batch(f, P))

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def best(self) -> Tuple[np.ndarray, float]:
        return self.points[0], float(self.values[0])


def es_n_plus_lambda(f, pop0: Population, lam: int, cov: CovarianceModel, budget, rng: RngStream):
    """``(N + lambda)`` evolution strategy.

    Each generation draws ``lam`` Gaussian mutations from ``rng`` and the
    uniformly chosen parents from ``rng.substream(1)``, then keeps the ``N``
    best of parents and offspring (ties: parents first, then offspring order).
    The initial population's evaluations count towards ``n_evals``.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    budget = as_budget(budget)
    parent_rng = rng.substream(1)
    pop = pop0
    N = pop.size
    n_evals = N
    trace = RunTrace("es_n_plus_lambda", rng.seed)
    trace.record(0, n_evals, pop.values[0])
    it = 0
    while not budget.exhausted(it, n_evals, trace.best_value):
        it += 1
        mutations = cov.sample(rng, lam)
        parents = parent_rng.integers(N, size=lam)
        children = pop.points[parents] + mutations
        child_values = evaluate_batch(f, children)
        n_evals += lam
        pool_x = np.vstack([pop.points, children])
        pool_f = np.concatenate([pop.values, child_values])
        keep = np.argsort(pool_f, kind="stable")[:N]
        pop = Population(pool_x[keep], pool_f[keep])
        trace.record(it, n_evals, pop.values[0])
    return pop, trace


def random_restarts(f, init: Union[Callable, Tuple], cov: CovarianceModel, n_restarts: int, budget,
                    rng: RngStream):
    """Greedy local searches from random starts; returns the overall best.

    Args:
        init: either a ``(lo, hi)`` box sampled uniformly, or a callable
            ``init(rng) -> x0``.
        budget: total budget, split evenly between the restarts.

    Restart ``i`` draws its start and then runs its local search on
    ``rng.substream(i)``; restarts run on the worker pool and the result does
    not depend on the worker count.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    if callable(init):
        sampler = init
    else:
        lo, hi = (as_vector(b) for b in init)
        if np.any(~(hi > lo)):
            raise ValueError("empty initialization box")
        sampler = lambda r: r.uniform(lo, hi)  # noqa: E731
    local_budget = as_budget(budget).split(n_restarts) if n_restarts > 1 else as_budget(budget)

    def run(i):
        r = rng.substream(i)
        return greedy_local_search(f, sampler(r), cov, local_budget, r)

    results: List = parallel_map(run, range(n_restarts))
    trace = RunTrace("random_restarts", rng.seed)
    best_x, best_f = None, np.inf
    it, offset = 0, 0
    for i, (x, local) in enumerate(results):
        for rec in local.records:
            trace.record(it, offset + rec.n_evals, rec.current, restart=i)
            it += 1
        offset += local.n_evals
        if local.best_value < best_f:
            best_x, best_f = x, local.best_value
    return best_x, trace
