"""Single-chain search loops.

Every loop evaluates the starting point first (one evaluation, recorded as
iteration 0), then runs until the budget is exhausted and returns the best
point seen together with its :class:`~zeroorder.core.RunTrace`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .core import (
    CovarianceModel,
    DivergenceError,
    RngStream,
    RunTrace,
    SearchBudget,
    as_budget,
    as_vector,
    evaluate,
)

__all__ = [
    "SearchBudget",
    "AnnealingSchedule",
    "pure_random_search",
    "greedy_local_search",
    "approx_gradient_descent",
    "sgld",
    "acceptance_probability",
    "metropolis_local_search",
]

DIVERGENCE_NORM = 1e8


@dataclass(frozen=True)
class AnnealingSchedule:
    """Logarithmic cooling for Langevin-type updates.

    ``alpha_k = alpha0 / (k + 1)``, ``lambda_k = lambda0 / log(k + 2)`` and
    ``gamma_k = sqrt(2 alpha_k lambda_k)``. ``noise=False`` zeroes ``gamma_k``
    and leaves plain (decaying-step) gradient descent.
    """

    alpha0: float
    lambda0: float
    noise: bool = True

    def __post_init__(self):
        if not self.alpha0 > 0 or not self.lambda0 > 0:
            raise ValueError("alpha0 and lambda0 must be positive")

    def step_size(self, k: int) -> float:
        return self.alpha0 / (k + 1)

    def temperature(self, k: int) -> float:
        return self.lambda0 / math.log(k + 2)

    def noise_scale(self, k: int) -> float:
        if not self.noise:
            return 0.0
        return math.sqrt(2.0 * self.step_size(k) * self.temperature(k))


def _box(bounds) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in bounds)
    if lo.shape != hi.shape or lo.size == 0 or np.any(~(hi > lo)):
        raise ValueError(f"sampling box is empty: lo={lo.tolist()}, hi={hi.tolist()}")
    return lo, hi


def pure_random_search(f, bounds, budget, rng: RngStream, x0=None):
    """Uniform sampling over a box, keeping a candidate only if it improves.

    Args:
        bounds: pair ``(lo, hi)`` of per-coordinate limits, ``lo < hi``.
        x0: starting point; drawn from the box when omitted.
    """
    lo, hi = _box(bounds)
    budget = as_budget(budget)
    x = rng.uniform(lo, hi) if x0 is None else as_vector(x0)
    fx = evaluate(f, x)
    n_evals = 1
    trace = RunTrace("pure_random_search", rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    while not budget.exhausted(it, n_evals, fx):
        it += 1
        cand = rng.uniform(lo, hi)
        fc = evaluate(f, cand)
        n_evals += 1
        if fc < fx:
            x, fx = cand, fc
        trace.record(it, n_evals, fx)
    return x, trace


def greedy_local_search(f, x0, cov: CovarianceModel, budget, rng: RngStream):
    """Gaussian perturbation of the incumbent, accepted on strict decrease."""
    budget = as_budget(budget)
    x = as_vector(x0, "x0")
    fx = evaluate(f, x)
    n_evals = 1
    trace = RunTrace("greedy_local_search", rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    while not budget.exhausted(it, n_evals, fx):
        it += 1
        d = cov.sample(rng, 1)
        y = (x + d)[0]
        fy = evaluate(f, y)
        n_evals += 1
        if fy < fx:
            x, fx = y, fy
        trace.record(it, n_evals, fx)
    return x, trace


def _guard(x, step, it):
    norm = float(np.linalg.norm(x))
    if not math.isfinite(norm) or norm > DIVERGENCE_NORM:
        raise DivergenceError(step, norm, it)


def approx_gradient_descent(f, x0, estimator: Callable, step: float, budget, rng: RngStream):
    """``x <- x - step * g`` with ``g`` from a sampling estimator.

    ``estimator`` is called as ``estimator(f, x, rng=rng)`` and must return a
    :class:`~zeroorder.estimators.GradientEstimate`. ``f(x)`` is evaluated after
    each step for the trace; that evaluation is counted.

    Raises:
        DivergenceError: if the iterate norm exceeds ``1e8``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    budget = as_budget(budget)
    x = as_vector(x0, "x0")
    fx = evaluate(f, x)
    n_evals = 1
    best_x, best_f = x, fx
    trace = RunTrace("approx_gradient_descent", rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    while not budget.exhausted(it, n_evals, best_f):
        it += 1
        est = estimator(f, x, rng=rng)
        x = x - step * est.g
        _guard(x, step, it)
        fx = evaluate(f, x)
        n_evals += est.n_evals + 1
        if fx < best_f:
            best_x, best_f = x, fx
        trace.record(it, n_evals, fx)
    return best_x, trace


def sgld(f, x0, estimator: Callable, schedule: AnnealingSchedule, budget, rng: RngStream):
    """Stochastic Langevin gradient descent with logarithmic cooling.

    The estimator draws from ``rng``; the injected Gaussian noise comes from
    ``rng.substream(1)``, so a noise-free schedule on the same stream sees the
    same gradient samples. Returns the best point seen, not the last iterate.
    """
    budget = as_budget(budget)
    x = as_vector(x0, "x0")
    noise_rng = rng.substream(1)
    fx = evaluate(f, x)
    n_evals = 1
    best_x, best_f = x, fx
    trace = RunTrace("sgld", rng.seed)
    trace.record(0, n_evals, fx)
    k = 0
    while not budget.exhausted(k, n_evals, best_f):
        alpha, gamma = schedule.step_size(k), schedule.noise_scale(k)
        est = estimator(f, x, rng=rng)
        x = x - alpha * est.g
        if gamma > 0.0:
            x = x + gamma * noise_rng.normal(x.size)
        _guard(x, alpha, k)
        fx = evaluate(f, x)
        n_evals += est.n_evals + 1
        if fx < best_f:
            best_x, best_f = x, fx
        trace.record(k + 1, n_evals, fx, temperature=schedule.temperature(k), step=alpha, noise=gamma)
        k += 1
    return best_x, trace


def acceptance_probability(delta: float, temperature: float) -> float:
    """Metropolis rule ``min(1, exp(-delta / temperature))``."""
    if delta <= 0.0:
        return 1.0
    return math.exp(-delta / temperature)


def metropolis_local_search(f, x0, cov: CovarianceModel, temperature: float, budget, rng: RngStream):
    """Greedy local search that also accepts uphill moves with Metropolis probability.

    Proposals are drawn from ``rng`` exactly as in :func:`greedy_local_search`;
    acceptance uniforms come from ``rng.substream(1)``.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    budget = as_budget(budget)
    x = as_vector(x0, "x0")
    u_rng = rng.substream(1)
    fx = evaluate(f, x)
    n_evals = 1
    best_x, best_f = x, fx
    trace = RunTrace("metropolis_local_search", rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    accepted = 0
    while not budget.exhausted(it, n_evals, best_f):
        it += 1
        y = (x + cov.sample(rng, 1))[0]
        fy = evaluate(f, y)
        n_evals += 1
        u = u_rng.random()
        if fy < fx or u < acceptance_probability(fy - fx, temperature):
            x, fx = y, fy
            accepted += 1
            if fx < best_f:
                best_x, best_f = x, fx
        trace.record(it, n_evals, fx, accepted=accepted)
    return best_x, trace
