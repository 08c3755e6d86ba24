"""Policy optimization with rollout-based Q oracles.

Everything here *maximizes* discounted reward, so updates ascend:
``theta <- theta + alpha * estimate``. The rest of the library minimizes; the
training trace therefore records the cost ``-F(theta)`` in its ``current``
column (and the value itself under the ``value`` extra).

Q-values are not learned: ``Q(s, a)`` is the deterministic discounted return
of taking ``a`` in ``s`` and following the policy afterwards, truncated at an
effective horizon long enough that ``gamma^H <= 1e-6``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    CovarianceModel,
    NumericalError,
    RngStream,
    RunTrace,
    ScaledIdentity,
    cholesky,
)
from .estimators import exponential_weights
from .trajopt import pendulum

__all__ = [
    "LinearPolicy",
    "affine_features",
    "pendulum_features",
    "LinearDynamics",
    "Env",
    "ActionNoise",
    "MonteCarloEstimate",
    "PolicyGradient",
    "effective_horizon",
    "q_values",
    "q_rollout",
    "on_policy_states",
    "value_at",
    "value_objective",
    "rs_actor_gradient",
    "rs_actor_update",
    "lse_actor_gradient",
    "lse_actor_update",
    "reinforce_gradient",
    "reinforce_update",
    "train",
    "ENVS",
    "make_env",
    "TrainConfig",
]

HORIZON_TOL = 1e-6


# --------------------------------------------------------------------------
# Policies and environments
# --------------------------------------------------------------------------


def affine_features(states) -> np.ndarray:
    """``[s, 1]``."""
    S = np.atleast_2d(states)
    return np.hstack([S, np.ones((S.shape[0], 1))])


def pendulum_features(states) -> np.ndarray:
    """``[cos theta, sin theta, theta_dot, 1]`` for pendulum states."""
    S = np.atleast_2d(states)
    return np.stack([np.cos(S[:, 0]), np.sin(S[:, 0]), S[:, 1], np.ones(S.shape[0])], axis=1)


@dataclass(frozen=True)
class LinearPolicy:
    """Deterministic policy ``pi(s) = theta @ phi(s)``.

    ``theta`` has shape ``(action_dim, feature_dim)``. Because action ``i``
    only depends on row ``i`` of ``theta``, the transposed Jacobian applied to
    an action-space vector ``v`` is simply ``outer(v, phi(s))``.
    """

    theta: np.ndarray
    features: Callable = affine_features

    def __post_init__(self):
        th = np.array(self.theta, dtype=float, ndmin=2)
        object.__setattr__(self, "theta", th)

    @property
    def action_dim(self) -> int:
        return self.theta.shape[0]

    def act(self, states) -> np.ndarray:
        return self.features(states) @ self.theta.T

    def jacobian_t(self, state, v) -> np.ndarray:
        """``(d pi / d theta)^T v`` at one state."""
        return np.outer(v, self.features(state)[0])

    def with_theta(self, theta) -> "LinearPolicy":
        return LinearPolicy(theta, self.features)


@dataclass(frozen=True)
class LinearDynamics:
    """``s' = A s + B a``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.array(self.A, dtype=float, ndmin=2))
        object.__setattr__(self, "B", np.array(self.B, dtype=float, ndmin=2))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    def step(self, states, actions) -> np.ndarray:
        return np.atleast_2d(states) @ self.A.T + np.atleast_2d(actions) @ self.B.T


@dataclass(frozen=True)
class Env:
    """Deterministic discounted control task.

    Args:
        dynamics: anything with a batched ``step(states, actions)``.
        reward: ``reward(states, actions) -> (B,)``.
        gamma: discount in ``[0, 1)``; ``0`` makes ``Q`` the immediate reward.
        init_sampler: ``init_sampler(rng, n) -> (n, state_dim)``.
        horizon_cap: requested truncation; raised when too short for ``gamma``.
    """

    dynamics: object
    reward: Callable
    gamma: float
    init_sampler: Callable
    horizon_cap: int = 1
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.horizon_cap < 1:
            raise ValueError("horizon_cap must be >= 1")


def effective_horizon(env: Env) -> int:
    """Smallest horizon ``>= horizon_cap`` with ``gamma^H <= 1e-6``."""
    if env.gamma == 0.0:
        return env.horizon_cap
    need = math.ceil(math.log(HORIZON_TOL) / math.log(env.gamma))
    return max(env.horizon_cap, need)


@dataclass(frozen=True)
class ActionNoise:
    """Gaussian action perturbations: ``m`` draws per state from ``cov``."""

    cov: CovarianceModel
    m: int = 10
    lam: float = math.inf

    def __post_init__(self):
        cholesky(self.cov.dense())
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    @classmethod
    def isotropic(cls, sigma: float, action_dim: int, m: int = 10, lam: float = math.inf) -> "ActionNoise":
        return cls(ScaledIdentity(sigma**2, action_dim), m, lam)


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    n: int

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class PolicyGradient:
    """An ascent direction in parameter space and its i.i.d. sample terms.

    ``samples`` has one entry per independent draw (noise index or episode);
    their mean is ``grad`` up to rounding.
    """

    grad: np.ndarray
    samples: np.ndarray
    n_rollouts: int

    def stderr(self) -> np.ndarray:
        n = self.samples.shape[0]
        return self.samples.std(axis=0, ddof=1) / math.sqrt(n)


# --------------------------------------------------------------------------
# Q oracle and value
# --------------------------------------------------------------------------


def q_values(env: Env, policy: LinearPolicy, states, actions, horizon: Optional[int] = None) -> np.ndarray:
    """Batched ``Q(s_i, a_i)``: take ``a_i``, then follow ``policy``."""
    H = effective_horizon(env) if horizon is None else int(horizon)
    x = np.atleast_2d(np.asarray(states, dtype=float))
    a = np.atleast_2d(np.asarray(actions, dtype=float))
    total = np.zeros(x.shape[0])
    disc = 1.0
    for t in range(H):
        if t > 0:
            a = policy.act(x)
        total = total + disc * env.reward(x, a)
        if t + 1 < H:
            x = env.dynamics.step(x, a)
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"Q rollout state became non-finite at step {t + 1}")
        disc *= env.gamma
    return total


def q_rollout(env: Env, policy: LinearPolicy, s, a) -> float:
    return float(q_values(env, policy, np.asarray(s, dtype=float)[None, :], np.asarray(a, dtype=float)[None, :])[0])


def on_policy_states(env: Env, policy: LinearPolicy, init_states, length: int) -> np.ndarray:
    """Deterministic trajectories, shape ``(n_traj, length, state_dim)``."""
    x = np.atleast_2d(np.asarray(init_states, dtype=float))
    out = [x]
    for t in range(1, length):
        x = env.dynamics.step(x, policy.act(x))
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"trajectory state became non-finite at step {t}")
        out.append(x)
    return np.stack(out, axis=1)


def value_at(env: Env, policy: LinearPolicy, init_states) -> MonteCarloEstimate:
    S = np.atleast_2d(np.asarray(init_states, dtype=float))
    J = q_values(env, policy, S, policy.act(S))
    se = float(J.std(ddof=1) / math.sqrt(J.size)) if J.size > 1 else math.nan
    return MonteCarloEstimate(float(J.mean()), se, J.size)


def value_objective(env: Env, policy: LinearPolicy, n_init: int, rng: RngStream) -> MonteCarloEstimate:
    """Monte Carlo average of ``J(theta, s)`` over ``n_init`` sampled initial states."""
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    return value_at(env, policy, env.init_sampler(rng, n_init))


# --------------------------------------------------------------------------
# Actor updates
# --------------------------------------------------------------------------


def _perturbed_q(env, policy, noise, init_states, rng, n_steps):
    """Shared sampling for the smoothed actor estimates.

    Returns visited states ``(S, ns)``, their depths, base Q ``(S,)``, noise
    ``(S, m, na)``, perturbed Q ``(S, m)`` and the rollout count.
    """
    H = effective_horizon(env)
    L = H if n_steps is None else int(n_steps)
    traj = on_policy_states(env, policy, init_states, L)
    n_traj = traj.shape[0]
    states = traj.reshape(n_traj * L, -1)
    depth = np.tile(np.arange(L), n_traj)
    S, m, na = states.shape[0], noise.m, policy.action_dim
    eps = noise.cov.sample(rng, S * m).reshape(S, m, na)
    actions = policy.act(states)
    rep_states = np.repeat(states, m, axis=0)
    pert = (actions[:, None, :] + eps).reshape(S * m, na)
    q_all = q_values(env, policy, np.vstack([states, rep_states]), np.vstack([actions, pert]), H)
    return states, depth, n_traj, q_all[:S], eps, q_all[S:].reshape(S, m), S * (m + 1)


def _assemble(policy, noise, states, depth, n_traj, gamma, coef, eps, weights):
    """``sum_k gamma^k J_k^T a_k`` averaged over trajectories, with per-draw samples.

    ``a_k = sum_j weights_kj coef_kj Sigma^-1 eps_kj``; the per-draw samples
    replace ``weights_kj`` by 1 (i.e. they are the terms whose plain mean the
    uniform-weight estimate is).
    """
    S, m, na = eps.shape
    scores = noise.cov.inverse_apply(eps.reshape(S * m, na)).reshape(S, m, na)
    terms = coef[:, :, None] * scores
    if weights is None:
        g_a = terms.mean(axis=1)
    else:
        g_a = (weights[:, :, None] * terms).sum(axis=1)
    disc = gamma ** depth.astype(float)
    phi = policy.features(states)
    grad = np.einsum("s,sa,sf->af", disc, g_a, phi) / n_traj
    samples = np.einsum("s,sja,sf->jaf", disc, terms, phi) / n_traj
    return grad, samples


def rs_actor_gradient(env: Env, policy: LinearPolicy, noise: ActionNoise, init_states, rng: RngStream,
                      n_steps: Optional[int] = None) -> PolicyGradient:
    """Smoothed deterministic policy gradient.

    For every state ``s_k`` visited by the deterministic on-policy rollouts
    from ``init_states``, draws ``m`` perturbations ``eps ~ N(0, Sigma)`` (one
    ``(S*m) x n_a`` block from ``rng``) and accumulates
    ``gamma^k (Q(s_k, a_k + eps) - Q(s_k, a_k)) (d pi/d theta)^T Sigma^-1 eps``,
    averaged over the noise and the trajectories and summed over depth.
    ``n_steps`` limits how many states per trajectory are used (default:
    the effective horizon).
    """
    states, depth, n_traj, q0, eps, qe, n_roll = _perturbed_q(env, policy, noise, init_states, rng, n_steps)
    coef = (qe - q0[:, None]) / 1.0
    grad, samples = _assemble(policy, noise, states, depth, n_traj, env.gamma, coef, eps, None)
    return PolicyGradient(grad, samples, n_roll)


def rs_actor_update(env, policy, noise, alpha: float, init_states, rng, n_steps=None) -> LinearPolicy:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = rs_actor_gradient(env, policy, noise, init_states, rng, n_steps)
    return policy.with_theta(policy.theta + alpha * g.grad)


def lse_actor_gradient(env: Env, policy: LinearPolicy, noise: ActionNoise, init_states, rng: RngStream,
                       n_steps: Optional[int] = None) -> PolicyGradient:
    """Exponentially weighted variant of :func:`rs_actor_gradient`.

    Per state, the ``m`` terms are combined with weights
    ``softmax((Q(s, a + eps_j) - max_j Q) / lam)`` instead of ``1/m``: high-Q
    perturbations dominate as ``lam -> 0`` and the uniform average is
    recovered as ``lam -> inf``.
    """
    if noise.m < 2:
        raise ValueError("lse actor update needs m >= 2")
    states, depth, n_traj, q0, eps, qe, n_roll = _perturbed_q(env, policy, noise, init_states, rng, n_steps)
    coef = (qe - q0[:, None]) / 1.0
    w = np.stack([exponential_weights(-row, noise.lam) for row in qe])
    grad, samples = _assemble(policy, noise, states, depth, n_traj, env.gamma, coef, eps, w)
    return PolicyGradient(grad, samples, n_roll)


def lse_actor_update(env, policy, noise, alpha: float, init_states, rng, n_steps=None) -> LinearPolicy:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = lse_actor_gradient(env, policy, noise, init_states, rng, n_steps)
    return policy.with_theta(policy.theta + alpha * g.grad)


def reinforce_gradient(env: Env, policy: LinearPolicy, cov: CovarianceModel, init_states,
                       rng: RngStream) -> PolicyGradient:
    """Stochastic policy gradient with a per-depth batch-mean baseline.

    Episodes start at ``init_states`` and take ``A_k ~ N(pi(S_k), cov)``
    for the effective horizon; one ``n_episodes x n_a`` noise block is drawn
    per step. The baseline at depth ``k`` is the mean return-to-go at depth
    ``k`` over the batch.
    """
    cholesky(cov.dense())
    H = effective_horizon(env)
    x = np.atleast_2d(np.asarray(init_states, dtype=float))
    N = x.shape[0]
    phis, scores, rewards = [], [], []
    for t in range(H):
        mean_a = policy.act(x)
        eps = cov.sample(rng, N)
        a = mean_a + eps
        phis.append(policy.features(x))
        scores.append(cov.inverse_apply(eps))
        rewards.append(np.asarray(env.reward(x, a), dtype=float))
        if t + 1 < H:
            x = env.dynamics.step(x, a)
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"episode state became non-finite at step {t + 1}")
    G = np.zeros(N)
    samples = np.zeros((N, policy.action_dim, phis[0].shape[1]))
    for t in range(H - 1, -1, -1):
        G = rewards[t] + env.gamma * G
        adv = G - G.mean()
        samples += (env.gamma**t) * np.einsum("n,na,nf->naf", adv, scores[t], phis[t])
    return PolicyGradient(samples.mean(axis=0), samples, N)


def reinforce_update(env, policy, cov, alpha: float, init_states, rng) -> LinearPolicy:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = reinforce_gradient(env, policy, cov, init_states, rng)
    return policy.with_theta(policy.theta + alpha * g.grad)


# --------------------------------------------------------------------------
# Training loop and environment catalog
# --------------------------------------------------------------------------


def train(env: Env, policy: LinearPolicy, method: str, alpha: float, iters: int, rng: RngStream,
          noise: Optional[ActionNoise] = None, n_traj: int = 1, n_eval: int = 16,
          n_steps: Optional[int] = None):
    """Run ``iters`` actor updates and trace the value on a fixed evaluation set.

    ``method`` is ``"rs"``, ``"lse"`` or ``"reinforce"``. Evaluation states
    come from ``rng.substream(0)``; iteration ``i`` draws its start states
    from ``rng.substream(i).substream(0)`` and its noise from
    ``rng.substream(i)``.

    Returns:
        ``(policy, trace)``; ``trace.current`` holds ``-value``.
    """
    if method not in ("rs", "lse", "reinforce"):
        raise ValueError(f"unknown method {method!r}; valid: rs, lse, reinforce")
    noise = noise or ActionNoise.isotropic(0.1, policy.action_dim)
    eval_states = env.init_sampler(rng.substream(0), n_eval)
    trace = RunTrace(f"policy_{method}", rng.seed)
    v = value_at(env, policy, eval_states)
    n_roll = n_eval
    trace.record(0, n_roll, -v.value, value=v.value, stderr=v.stderr)
    for it in range(1, iters + 1):
        r = rng.substream(it)
        inits = env.init_sampler(r.substream(0), n_traj)
        if method == "rs":
            g = rs_actor_gradient(env, policy, noise, inits, r, n_steps)
        elif method == "lse":
            g = lse_actor_gradient(env, policy, noise, inits, r, n_steps)
        else:
            g = reinforce_gradient(env, policy, noise.cov, inits, r)
        policy = policy.with_theta(policy.theta + alpha * g.grad)
        v = value_at(env, policy, eval_states)
        n_roll += g.n_rollouts + n_eval
        trace.record(it, n_roll, -v.value, value=v.value, stderr=v.stderr)
    return policy, trace


def _pendulum_env(gamma: float = 0.9, horizon_cap: int = 1, dt: float = 0.05) -> Env:
    dyn = pendulum(dt=dt)

    def reward(s, a):
        return -((1.0 - np.cos(s[:, 0])) + 0.1 * s[:, 1] ** 2 + 0.001 * np.sum(a**2, axis=1))

    def init(rng, n):
        return np.column_stack([rng.uniform(-math.pi, math.pi, n), rng.uniform(-1.0, 1.0, n)])

    return Env(dyn, reward, gamma, init, horizon_cap, "pendulum")


def _lqr_toy_env(gamma: float = 0.9, horizon_cap: int = 1) -> Env:
    def reward(s, a):
        return -(s[:, 0] ** 2 + a[:, 0] ** 2)

    def init(rng, n):
        return np.where(rng.random(n) < 0.5, -1.0, 1.0)[:, None]

    return Env(LinearDynamics([[0.5]], [[1.0]]), reward, gamma, init, horizon_cap, "lqr_toy")


ENVS = {"pendulum": _pendulum_env, "lqr_toy": _lqr_toy_env}
_FEATURES = {"pendulum": (pendulum_features, 4), "lqr_toy": (affine_features, 2)}


def make_env(name: str, gamma: float, horizon_cap: int = 1) -> Env:
    if name not in ENVS:
        raise KeyError(f"unknown environment {name!r}; valid: {sorted(ENVS)}")
    return ENVS[name](gamma=gamma, horizon_cap=horizon_cap)


@dataclass(frozen=True)
class TrainConfig:
    """Training run description, loadable from JSON."""

    env: str = "pendulum"
    gamma: float = 0.9
    horizon_cap: int = 1
    m: int = 10
    sigma: float = 0.1
    lam: float = math.inf
    alpha: float = 0.01
    iters: int = 200
    seeds: list = field(default_factory=lambda: list(range(6)))
    method: str = "rs"
    n_eval: int = 16

    KEYS = ("env", "gamma", "horizon_cap", "m", "sigma", "lambda", "alpha", "iters", "seeds", "method", "n_eval")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        kw = dict(d)
        if "lambda" in kw:
            lam = kw.pop("lambda")
            kw["lam"] = math.inf if lam is None else float(lam)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"env": self.env, "gamma": self.gamma, "horizon_cap": self.horizon_cap, "m": self.m,
                "sigma": self.sigma, "lambda": None if math.isinf(self.lam) else self.lam, "alpha": self.alpha,
                "iters": self.iters, "seeds": list(self.seeds), "method": self.method, "n_eval": self.n_eval}

    def build(self):
        """``(env, zero policy, noise)`` for this config."""
        env = make_env(self.env, self.gamma, self.horizon_cap)
        feats, n_feat = _FEATURES[self.env]
        policy = LinearPolicy(np.zeros((1, n_feat)), feats)
        noise = ActionNoise.isotropic(self.sigma, 1, self.m, self.lam)
        return env, policy, noise
