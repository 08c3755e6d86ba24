"""Sampling-based gradient estimators and Monte Carlo smoothing surrogates.

All estimators share the call convention ``est(f, x, ..., rng=...)`` and
return a :class:`GradientEstimate`; bind their hyperparameters with
:func:`functools.partial` to plug them into
:func:`zeroorder.search.approx_gradient_descent`.

Exponentials are always evaluated relative to the smallest sampled value, in
``expm1``/``log1p`` form, so neither very small nor very large temperatures
lose the signal to underflow or cancellation.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CovarianceModel, RngStream, ScaledIdentity, as_vector, evaluate_batch

__all__ = [
    "SmoothingConfig",
    "GradientEstimate",
    "fd_forward",
    "random_coordinate",
    "spsa",
    "rs_forward",
    "rs_central",
    "lse_gradient",
    "surrogate_rs",
    "surrogate_lse",
    "smoothed_value",
    "lse_value",
    "risk_averse_value",
    "exponential_weights",
    "forward_smoothing_gradient",
    "lse_direction",
    "antithetic_directions",
]


@functools.lru_cache(maxsize=64)
def _unit_covariance(dim: int) -> ScaledIdentity:
    return ScaledIdentity(1.0, dim)


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing radius ``mu``, temperature ``lam`` (``inf`` disables the
    log-sum-exp transform), sampling covariance and sample count."""

    mu: float = 1.0
    lam: float = math.inf
    cov: Optional[CovarianceModel] = None
    n_samples: int = 1

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be a positive finite number, got {self.mu}")
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0 (or inf), got {self.lam}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def covariance(self, dim: int) -> CovarianceModel:
        if self.cov is None:
            return _unit_covariance(dim)
        if self.cov.dim != dim:
            raise ValueError(f"covariance has dim {self.cov.dim}, point has dim {dim}")
        return self.cov


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    n_evals: int
    aux: Optional[np.ndarray] = None


def _check_mu(mu):
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")


def fd_forward(f, x, mu: float, rng: Optional[RngStream] = None) -> GradientEstimate:
    """Forward finite differences along every coordinate (``n + 1`` evaluations)."""
    _check_mu(mu)
    x = as_vector(x)
    n = x.size
    probes = np.vstack([x, x + mu * np.eye(n)])
    values = evaluate_batch(f, probes)
    g = (values[1:] - values[0]) / mu
    return GradientEstimate(g, n + 1, values[1:])


def random_coordinate(f, x, mu: float, rng: Optional[RngStream] = None,
                      coordinate: Optional[int] = None) -> GradientEstimate:
    """Forward difference along one uniformly drawn coordinate.

    ``coordinate`` pins the coordinate (0-based) instead of drawing it.
    """
    _check_mu(mu)
    x = as_vector(x)
    j = int(rng.integers(x.size)) if coordinate is None else int(coordinate)
    probe = x.copy()
    probe[j] += mu
    values = evaluate_batch(f, np.vstack([x, probe]))
    g = np.zeros_like(x)
    g[j] = (values[1] - values[0]) / mu
    return GradientEstimate(g, 2, values[1:])


def spsa(f, x, mu: float, rng: Optional[RngStream] = None,
         delta: Optional[np.ndarray] = None) -> GradientEstimate:
    """Simultaneous perturbation: central difference along a random sign vector."""
    _check_mu(mu)
    x = as_vector(x)
    if delta is None:
        delta = rng.signs(x.size)
    delta = np.asarray(delta, dtype=float)
    values = evaluate_batch(f, np.vstack([x + mu * delta, x - mu * delta]))
    g = ((values[0] - values[1]) / (2.0 * mu)) * delta
    return GradientEstimate(g, 2, values)


def forward_smoothing_gradient(values, base: float, directions, cov: CovarianceModel, mu: float) -> np.ndarray:
    """Average of ``(f_k - f(x)) / mu * Sigma^-1 eps_k`` over precomputed values."""
    coef = (np.asarray(values, dtype=float) - base) / mu
    scores = cov.inverse_apply(np.atleast_2d(directions))
    return (coef[:, None] * scores).mean(axis=0)


def _directions(cfg: SmoothingConfig, dim: int, rng, directions) -> np.ndarray:
    if directions is not None:
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        if d.shape[1] != dim:
            raise ValueError("directions have the wrong dimension")
        return d
    return cfg.covariance(dim).sample(rng, cfg.n_samples)


def rs_forward(f, x, cfg: SmoothingConfig, rng: Optional[RngStream] = None,
               directions=None) -> GradientEstimate:
    """Gaussian smoothing gradient with a forward difference.

    ``f(x)`` is evaluated once and shared by the ``K`` samples, so the cost is
    ``K + 1`` evaluations. ``directions`` (``K x n``) overrides the draws.
    """
    x = as_vector(x)
    eps = _directions(cfg, x.size, rng, directions)
    values = evaluate_batch(f, np.vstack([x, x + cfg.mu * eps]))
    g = forward_smoothing_gradient(values[1:], values[0], eps, cfg.covariance(x.size), cfg.mu)
    return GradientEstimate(g, eps.shape[0] + 1, values[1:])


def rs_central(f, x, cfg: SmoothingConfig, rng: Optional[RngStream] = None,
               directions=None) -> GradientEstimate:
    """Gaussian smoothing gradient with a central difference (``2K`` evaluations)."""
    x = as_vector(x)
    eps = _directions(cfg, x.size, rng, directions)
    K = eps.shape[0]
    values = evaluate_batch(f, np.vstack([x + cfg.mu * eps, x - cfg.mu * eps]))
    coef = (values[:K] - values[K:]) / (2.0 * cfg.mu)
    scores = cfg.covariance(x.size).inverse_apply(eps)
    g = (coef[:, None] * scores).mean(axis=0)
    return GradientEstimate(g, 2 * K, values)


def exponential_weights(values, lam: float) -> np.ndarray:
    """Normalized ``exp(-(f_k - min f) / lam)``; uniform when ``lam`` is infinite."""
    v = np.asarray(values, dtype=float)
    if math.isinf(lam):
        return np.full(v.size, 1.0 / v.size)
    e = np.exp(-(v - v.min()) / lam)
    return e / e.sum()


def lse_direction(values, lam: float, scores) -> np.ndarray:
    """``sum_k (w_k - 1/K) s_k`` for exponential-average weights ``w``.

    Computed as ``sum_k (u_k - mean u) s_k / (K (1 + mean u))`` with
    ``u_k = expm1(-(f_k - rho)/lam)``: exact algebraically, and stable as
    ``lam`` grows (the weights approach ``1/K``).
    """
    v = np.asarray(values, dtype=float)
    s = np.atleast_2d(scores)
    K = v.size
    if math.isinf(lam):
        return np.zeros(s.shape[1])
    u = np.expm1(-(v - v.min()) / lam)
    ubar = np.add.reduce(u) / K  # np.mean without its Python-level overhead
    return ((u - ubar)[:, None] * s).sum(axis=0) / (K * (1.0 + ubar))


def lse_gradient(f, x, cfg: SmoothingConfig, rng: Optional[RngStream] = None,
                 directions=None) -> GradientEstimate:
    """Self-normalized gradient estimate of the log-sum-exp surrogate.

    With ``lam = inf`` this falls back to the large-temperature limit, the
    sample-mean-centered smoothing gradient
    ``mean_k (f_k - mean f) Sigma^-1 eps_k / mu``.
    """
    x = as_vector(x)
    eps = _directions(cfg, x.size, rng, directions)
    K = eps.shape[0]
    if K < 2:
        raise ValueError("lse_gradient needs at least two samples")
    values = evaluate_batch(f, x + cfg.mu * eps)
    scores = cfg.covariance(x.size).inverse_apply(eps)
    if math.isinf(cfg.lam):
        g = ((values - values.mean())[:, None] * scores).mean(axis=0) / cfg.mu
    else:
        weighted = lse_direction(values, cfg.lam, scores) + np.add.reduce(scores, axis=0) / K
        g = (-cfg.lam / cfg.mu) * weighted
    return GradientEstimate(g, K, values)


# --------------------------------------------------------------------------
# Surrogate values
# --------------------------------------------------------------------------


def smoothed_value(values) -> float:
    """Monte Carlo Gaussian-smoothing value ``mean_k f_k``."""
    v = np.asarray(values, dtype=float)
    rho = v.min()
    return float(rho + (v - rho).mean())


def lse_value(values, lam: float) -> float:
    """``-lam log mean exp(-f_k / lam)``, shifted by the minimum."""
    if math.isinf(lam):
        return smoothed_value(values)
    v = np.asarray(values, dtype=float)
    rho = v.min()
    m = np.expm1(-(v - rho) / lam).mean()
    return float(rho - lam * math.log1p(m))


def risk_averse_value(values, lam: float) -> float:
    """``+lam log mean exp(+f_k / lam)``, shifted by the maximum."""
    if math.isinf(lam):
        return smoothed_value(values)
    v = np.asarray(values, dtype=float)
    top = v.max()
    m = np.expm1((v - top) / lam).mean()
    return float(top + lam * math.log1p(m))


def _sample_values(f, x, cfg, rng, directions):
    x = as_vector(x)
    eps = _directions(cfg, x.size, rng, directions)
    return evaluate_batch(f, x + cfg.mu * eps)


def surrogate_rs(f, x, cfg: SmoothingConfig, rng: Optional[RngStream] = None, directions=None) -> float:
    return smoothed_value(_sample_values(f, x, cfg, rng, directions))


def surrogate_lse(f, x, cfg: SmoothingConfig, rng: Optional[RngStream] = None, directions=None) -> float:
    if math.isinf(cfg.lam):
        raise ValueError("surrogate_lse needs a finite temperature")
    return lse_value(_sample_values(f, x, cfg, rng, directions), cfg.lam)


def antithetic_directions(cov: CovarianceModel, rng: RngStream, pairs: int) -> np.ndarray:
    """``[eps; -eps]`` for ``pairs`` draws; only meant for tests and probes."""
    eps = cov.sample(rng, pairs)
    return np.vstack([eps, -eps])
