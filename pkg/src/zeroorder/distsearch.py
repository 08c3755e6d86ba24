"""Distribution-based optimizers: predictive sampling, MPPI, the CMA family and CEM.

The CMA update is the weighted natural-gradient step on a Gaussian
``N(x, Sigma)``; the weight scheme decides which algorithm comes out
(exponential average: MPPI-CMA; rank-based: CMA-ES without evolution paths;
elitist: a CEM-like variant). Weights are "utilities": larger is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    BlockDiagonal,
    CovarianceModel,
    Full,
    NotPositiveDefiniteError,
    RngStream,
    RunTrace,
    as_budget,
    as_vector,
    cholesky,
    evaluate,
    evaluate_batch,
)
from .estimators import exponential_weights

__all__ = [
    "ExponentialAverage",
    "Ordering",
    "Elitist",
    "RawCentered",
    "WeightScheme",
    "SearchDistribution",
    "compute_weights",
    "default_ordering_weights",
    "predictive_sampling",
    "mppi_update",
    "mppi",
    "cma_update",
    "cma_step",
    "cma",
    "mppi_cma",
    "cma_block_diagonal",
    "cem_update",
    "cem",
]


@dataclass(frozen=True)
class ExponentialAverage:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class Ordering:
    """Fixed rank weights ``w_1 >= ... >= w_K`` summing to one.

    ``weights=None`` selects the usual CMA-ES recombination profile for
    whatever ``K`` is used.
    """

    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(np.diff(w) > 0):
                raise ValueError("ordering weights must be non-increasing")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("ordering weights must sum to one")


@dataclass(frozen=True)
class Elitist:
    n_elite: int

    def __post_init__(self):
        if self.n_elite < 1:
            raise ValueError("n_elite must be >= 1")


@dataclass(frozen=True)
class RawCentered:
    """``w_k = f(x) - f(x_k)``: improvement over the current mean, unnormalized."""


WeightScheme = Union[ExponentialAverage, Ordering, Elitist, RawCentered]


def default_ordering_weights(K: int) -> np.ndarray:
    k = np.arange(1, K + 1)
    w = np.maximum(0.0, math.log(K / 2.0 + 1.0) - np.log(k))
    return w / w.sum()


def _rank_order(values: np.ndarray) -> np.ndarray:
    # stable: equal values keep index order
    return np.argsort(values, kind="stable")


def compute_weights(values, scheme: WeightScheme, baseline: Optional[float] = None) -> np.ndarray:
    """Per-sample weights for ``values`` (lower value = better sample).

    Args:
        baseline: ``f`` at the current mean; required by :class:`RawCentered`.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("values must be finite and non-empty")
    K = v.size
    if isinstance(scheme, ExponentialAverage):
        return exponential_weights(v, scheme.lam)
    if isinstance(scheme, Ordering):
        base = default_ordering_weights(K) if scheme.weights is None else np.asarray(scheme.weights, dtype=float)
        if base.size != K:
            raise ValueError(f"ordering has {base.size} weights for {K} samples")
        w = np.empty(K)
        w[_rank_order(v)] = base
        return w
    if isinstance(scheme, Elitist):
        if scheme.n_elite > K:
            raise ValueError(f"n_elite={scheme.n_elite} exceeds the number of samples {K}")
        w = np.zeros(K)
        w[_rank_order(v)[: scheme.n_elite]] = 1.0 / scheme.n_elite
        return w
    if isinstance(scheme, RawCentered):
        if baseline is None:
            raise ValueError("RawCentered weights need the value at the current mean")
        return float(baseline) - v
    raise TypeError(f"unknown weight scheme {scheme!r}")


@dataclass(frozen=True)
class SearchDistribution:
    mean: np.ndarray
    cov: CovarianceModel

    def __post_init__(self):
        m = as_vector(self.mean, "mean")
        if m.size != self.cov.dim:
            raise ValueError("mean and covariance dimensions differ")
        object.__setattr__(self, "mean", m)

    def sample(self, rng: RngStream, size: int) -> np.ndarray:
        return self.mean + self.cov.sample(rng, size)


# --------------------------------------------------------------------------
# Fixed-covariance methods
# --------------------------------------------------------------------------


def predictive_sampling(f, x0, cov: CovarianceModel, K: int, budget, rng: RngStream):
    """Keep the best of the incumbent and ``K`` Gaussian perturbations of it."""
    if K < 1:
        raise ValueError("K must be >= 1")
    budget = as_budget(budget)
    x = as_vector(x0, "x0")
    fx = evaluate(f, x)
    n_evals = 1
    trace = RunTrace("predictive_sampling", rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    while not budget.exhausted(it, n_evals, fx):
        it += 1
        cands = x + cov.sample(rng, K)
        values = evaluate_batch(f, cands)
        n_evals += K
        j = int(np.argmin(values))
        if values[j] < fx:  # ties keep the incumbent
            x, fx = cands[j], float(values[j])
        trace.record(it, n_evals, fx)
    return x, trace


def mppi_update(samples, values, lam: float) -> np.ndarray:
    """Exponential-average of the samples."""
    w = compute_weights(values, ExponentialAverage(lam))
    return w @ np.asarray(samples, dtype=float)


def mppi(f, x0, cov: CovarianceModel, K: int, lam: float, budget, rng: RngStream):
    """Model-predictive path integral iteration with a fixed covariance.

    Each iteration costs ``K`` sample evaluations plus one evaluation of the
    new mean for the trace. Returns the best mean seen.
    """
    if K < 2 or not lam > 0:
        raise ValueError("mppi needs K >= 2 and lam > 0")
    budget = as_budget(budget)
    x = as_vector(x0, "x0")
    fx = evaluate(f, x)
    n_evals = 1
    best_x, best_f = x, fx
    trace = RunTrace("mppi", rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    while not budget.exhausted(it, n_evals, best_f):
        it += 1
        samples = x + cov.sample(rng, K)
        values = evaluate_batch(f, samples)
        x = mppi_update(samples, values, lam)
        fx = evaluate(f, x)
        n_evals += K + 1
        if fx < best_f:
            best_x, best_f = x, fx
        trace.record(it, n_evals, fx)
    return best_x, trace


# --------------------------------------------------------------------------
# CMA family
# --------------------------------------------------------------------------


def _scatter_update(old: np.ndarray, deviations: np.ndarray, w: np.ndarray, S: float, step: float) -> np.ndarray:
    c = (1.0 - step * S) * old + step * ((deviations.T * w) @ deviations)
    return 0.5 * (c + c.T)


def cma_update(dist: SearchDistribution, deviations, weights, step_mean: float, step_cov: float) -> SearchDistribution:
    """Weighted natural-gradient update of mean and covariance.

    ``deviations`` are the samples minus the mean they were drawn around.
    The covariance uses those old-mean deviations, so it is updated first.
    A block-diagonal covariance is updated block by block and stays
    block-diagonal.

    Raises:
        NotPositiveDefiniteError: if the new covariance does not factor; the
            weight vector is attached.
    """
    D = np.atleast_2d(np.asarray(deviations, dtype=float))
    w = np.asarray(weights, dtype=float)
    S = float(w.sum())
    try:
        if isinstance(dist.cov, BlockDiagonal):
            blocks = [
                Full(_scatter_update(b.matrix, D[:, sl], w, S, step_cov))
                for sl, b in zip(dist.cov.slices, dist.cov.blocks)
            ]
            cov = BlockDiagonal(blocks)
        else:
            cov = Full(_scatter_update(dist.cov.dense(), D, w, S, step_cov))
    except NotPositiveDefiniteError as err:
        raise NotPositiveDefiniteError(
            err.minor, f"covariance update is not positive definite ({err}); try a smaller step_cov", w
        ) from None
    x = dist.mean
    mean = (1.0 - step_mean * S) * x + step_mean * (w @ (x + D))
    return SearchDistribution(mean, cov)


def _cma_iteration(f, dist, K, scheme, step_mean, step_cov, rng):
    D = dist.cov.sample(rng, K)
    values = evaluate_batch(f, dist.mean + D)
    n = K
    baseline = None
    if isinstance(scheme, RawCentered):
        baseline = evaluate(f, dist.mean)
        n += 1
    w = compute_weights(values, scheme, baseline)
    return cma_update(dist, D, w, step_mean, step_cov), n


def cma_step(f, dist: SearchDistribution, K: int, scheme: WeightScheme, step_mean: float,
             step_cov: float, rng: RngStream) -> SearchDistribution:
    """One sample-weight-update round of Algorithm-6 style CMA."""
    return _cma_iteration(f, dist, K, scheme, step_mean, step_cov, rng)[0]


def _as_steps(steps) -> Tuple[float, float]:
    if np.isscalar(steps):
        return float(steps), float(steps)
    am, ac = steps
    return float(am), float(ac)


def cma(f, dist0: SearchDistribution, K: int, scheme: WeightScheme, steps, budget, rng: RngStream,
        algorithm_id: str = "cma"):
    """Iterate :func:`cma_step`; the trace records ``f(mean)`` after each update.

    ``steps`` is ``(step_mean, step_cov)`` or one shared step size.
    Returns the final distribution and the trace.
    """
    step_mean, step_cov = _as_steps(steps)
    budget = as_budget(budget)
    dist = dist0
    fx = evaluate(f, dist.mean)
    n_evals = 1
    trace = RunTrace(algorithm_id, rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    while not budget.exhausted(it, n_evals, trace.best_value):
        it += 1
        dist, n = _cma_iteration(f, dist, K, scheme, step_mean, step_cov, rng)
        fx = evaluate(f, dist.mean)
        n_evals += n + 1
        trace.record(it, n_evals, fx)
    return dist, trace


def mppi_cma(f, dist0: SearchDistribution, K: int, lam: float, steps, budget, rng: RngStream):
    """CMA with exponential-average weights."""
    return cma(f, dist0, K, ExponentialAverage(lam), steps, budget, rng, algorithm_id="mppi_cma")


def cma_block_diagonal(f, dist0: SearchDistribution, K: int, scheme: WeightScheme, steps, budget,
                       rng: RngStream):
    """CMA whose covariance is kept block-diagonal (e.g. one block per time step)."""
    if not isinstance(dist0.cov, BlockDiagonal):
        raise TypeError("cma_block_diagonal needs a BlockDiagonal covariance")
    return cma(f, dist0, K, scheme, steps, budget, rng, algorithm_id="cma_block_diagonal")


# --------------------------------------------------------------------------
# Cross-entropy method
# --------------------------------------------------------------------------


def cem_update(samples, values, n_elite: int):
    """Elite mean and elite covariance around the *new* mean.

    Returns ``(mean, cov_matrix, jitter)``; ``jitter`` is the multiple of the
    identity added when the elite scatter is rank deficient (0.0 otherwise).
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    K, n = X.shape
    if not 1 <= n_elite <= K:
        raise ValueError(f"need 1 <= n_elite <= K, got n_elite={n_elite}, K={K}")
    elites = X[_rank_order(np.asarray(values, dtype=float))[:n_elite]]
    mean = elites.mean(axis=0)
    dev = elites - mean
    C = dev.T @ dev / n_elite
    C = 0.5 * (C + C.T)
    jitter = 0.0
    if n_elite <= n:
        jitter = _jitter(C)
    else:
        try:
            cholesky(C)
        except NotPositiveDefiniteError:
            jitter = _jitter(C)
    if jitter:
        C = C + jitter * np.eye(n)
    return mean, C, jitter


def _jitter(C: np.ndarray) -> float:
    n = C.shape[0]
    delta = 1e-9 * float(np.trace(C)) / n
    return delta if delta > 0 else 1e-300


def cem(f, dist0: SearchDistribution, K: int, n_elite: int, budget, rng: RngStream):
    """Cross-entropy method with a full covariance."""
    if not 1 <= n_elite <= K:
        raise ValueError(f"need 1 <= n_elite <= K, got n_elite={n_elite}, K={K}")
    budget = as_budget(budget)
    dist = dist0
    fx = evaluate(f, dist.mean)
    n_evals = 1
    trace = RunTrace("cem", rng.seed)
    trace.record(0, n_evals, fx)
    it = 0
    while not budget.exhausted(it, n_evals, trace.best_value):
        it += 1
        X = dist.sample(rng, K)
        values = evaluate_batch(f, X)
        mean, C, jitter = cem_update(X, values, n_elite)
        dist = SearchDistribution(mean, Full(C))
        fx = evaluate(f, dist.mean)
        n_evals += K + 1
        trace.record(it, n_evals, fx, jitter=jitter)
    return dist, trace
