"""Single-shooting trajectory optimization.

A :class:`TrajectoryProblem` turns a control sequence ``u_0..u_{T-1}``
(flattened time-major into a vector of length ``T * control_dim``) into the
cost of the rollout it induces. All dynamics are vectorized over a leading
batch axis, which is how the sample-based optimizers evaluate thousands of
candidate sequences per iteration.

Angle conventions: every pole/pendulum angle is 0 when upright and ``pi``
when hanging; positive angles rotate clockwise (towards +x for the carts).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .core import NumericalError, Objective, as_vector

__all__ = [
    "RolloutError",
    "DynamicsModel",
    "pendulum",
    "cartpole",
    "double_cartpole",
    "DYNAMICS",
    "pendulum_energy",
    "cartpole_energy",
    "SwingUpCost",
    "TrajectoryProblem",
    "Rollout",
    "rollout",
    "rollout_costs",
    "as_objective",
    "flatten_controls",
    "unflatten_controls",
    "shift_controls",
    "swingup_problem",
    "problem_from_dict",
    "load_problem",
    "PROBLEMS",
]


class RolloutError(NumericalError):
    def __init__(self, time_index: int):
        self.time_index = int(time_index)
        super().__init__(f"state became non-finite at time index {time_index}")


@dataclass(frozen=True)
class DynamicsModel:
    """Discrete-time dynamics ``x_{t+1} = step(x_t, u_t)`` at a fixed ``dt``.

    ``accel(q, v, u)`` returns generalized accelerations for batched
    positions/velocities; :meth:`step` integrates them with semi-implicit
    Euler (velocity first, then position with the new velocity).
    """

    name: str
    state_dim: int
    control_dim: int
    dt: float
    accel: Callable
    params: dict = field(default_factory=dict)
    angle_indices: Tuple[int, ...] = ()

    @property
    def n_pos(self) -> int:
        return self.state_dim // 2

    def step(self, state, control) -> np.ndarray:
        x = np.asarray(state, dtype=float)
        u = np.asarray(control, dtype=float)
        single = x.ndim == 1
        if single:
            x, u = x[None, :], u[None, :]
        n = self.n_pos
        q, v = x[:, :n], x[:, n:]
        v_next = v + self.dt * self.accel(q, v, u)
        q_next = q + self.dt * v_next
        out = np.concatenate([q_next, v_next], axis=1)
        return out[0] if single else out


def pendulum(dt: float = 0.01, mass: float = 1.0, length: float = 1.0, gravity: float = 9.81,
             damping: float = 0.05) -> DynamicsModel:
    """Point-mass pendulum with a torque input; state ``(theta, theta_dot)``."""
    inertia = mass * length**2

    def accel(q, v, u):
        return (gravity / length) * np.sin(q) + (u - damping * v) / inertia

    params = dict(mass=mass, length=length, gravity=gravity, damping=damping)
    return DynamicsModel("pendulum", 2, 1, dt, accel, params, (0,))


def cartpole(dt: float = 0.01, cart_mass: float = 1.0, pole_mass: float = 0.1, half_length: float = 0.5,
             gravity: float = 9.81) -> DynamicsModel:
    """Cart with a uniform pole, force on the cart; state ``(x, theta, x_dot, theta_dot)``."""
    total = cart_mass + pole_mass
    ml = pole_mass * half_length

    def accel(q, v, u):
        th, thd = q[:, 1], v[:, 1]
        s, c = np.sin(th), np.cos(th)
        force = u[:, 0]
        tmp = (force + ml * thd**2 * s) / total
        th_acc = (gravity * s - c * tmp) / (half_length * (4.0 / 3.0 - pole_mass * c**2 / total))
        x_acc = tmp - ml * th_acc * c / total
        return np.stack([x_acc, th_acc], axis=1)

    params = dict(cart_mass=cart_mass, pole_mass=pole_mass, half_length=half_length, gravity=gravity)
    return DynamicsModel("cartpole", 4, 1, dt, accel, params, (1,))


def double_cartpole(dt: float = 0.01, cart_mass: float = 1.0, pole_masses=(0.1, 0.1),
                    half_lengths=(0.5, 0.5), gravity: float = 9.81) -> DynamicsModel:
    """Cart carrying two uniform poles in series.

    State ``(x, theta1, theta2, x_dot, theta1_dot, theta2_dot)``; both angles
    are absolute (measured from the vertical).
    """
    m1, m2 = (float(m) for m in pole_masses)
    l1, l2 = (float(h) for h in half_lengths)
    L1 = 2.0 * l1
    a1 = m1 * l1 + m2 * L1

    def accel(q, v, u):
        t1, t2 = q[:, 1], q[:, 2]
        w1, w2 = v[:, 1], v[:, 2]
        c1, s1, c2, s2 = np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)
        c12, s12 = np.cos(t1 - t2), np.sin(t1 - t2)
        B = q.shape[0]
        M = np.empty((B, 3, 3))
        M[:, 0, 0] = cart_mass + m1 + m2
        M[:, 0, 1] = M[:, 1, 0] = a1 * c1
        M[:, 0, 2] = M[:, 2, 0] = m2 * l2 * c2
        M[:, 1, 1] = (4.0 / 3.0) * m1 * l1**2 + m2 * L1**2
        M[:, 1, 2] = M[:, 2, 1] = m2 * L1 * l2 * c12
        M[:, 2, 2] = (4.0 / 3.0) * m2 * l2**2
        rhs = np.stack(
            [
                u[:, 0] + a1 * s1 * w1**2 + m2 * l2 * s2 * w2**2,
                a1 * gravity * s1 - m2 * L1 * l2 * s12 * w2**2,
                m2 * l2 * gravity * s2 + m2 * L1 * l2 * s12 * w1**2,
            ],
            axis=1,
        )
        return np.linalg.solve(M, rhs[:, :, None])[:, :, 0]

    params = dict(cart_mass=cart_mass, pole_masses=[m1, m2], half_lengths=[l1, l2], gravity=gravity)
    return DynamicsModel("double_cartpole", 6, 1, dt, accel, params, (1, 2))


DYNAMICS = {"pendulum": pendulum, "cartpole": cartpole, "double_cartpole": double_cartpole}


def pendulum_energy(model: DynamicsModel, states) -> np.ndarray:
    p = model.params
    x = np.atleast_2d(states)
    return 0.5 * p["mass"] * p["length"] ** 2 * x[:, 1] ** 2 + p["mass"] * p["gravity"] * p["length"] * np.cos(x[:, 0])


def cartpole_energy(model: DynamicsModel, states) -> np.ndarray:
    """Total mechanical energy, potential measured from the pivot height."""
    p = model.params
    mc, mp, l, g = p["cart_mass"], p["pole_mass"], p["half_length"], p["gravity"]
    x = np.atleast_2d(states)
    th, xd, thd = x[:, 1], x[:, 2], x[:, 3]
    kinetic = 0.5 * (mc + mp) * xd**2 + mp * l * xd * thd * np.cos(th) + 0.5 * (4.0 / 3.0) * mp * l**2 * thd**2
    return kinetic + mp * g * l * np.cos(th)


# --------------------------------------------------------------------------
# Costs and problems
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SwingUpCost:
    """``w_theta (1 - cos theta)^2 + w_vel |v|^2 + w_pos x^2 + w_u |u|^2`` per stage.

    The terminal cost is ``w_terminal`` times the state part of the stage cost.
    ``w_pos`` applies to the cart position (ignored for the pendulum).
    """

    w_theta: float = 1.0
    w_vel: float = 0.01
    w_pos: float = 0.1
    w_u: float = 1e-4
    w_terminal: float = 10.0

    def state_cost(self, model: DynamicsModel, x: np.ndarray) -> np.ndarray:
        n = model.n_pos
        c = np.zeros(x.shape[0])
        for i in model.angle_indices:
            c = c + self.w_theta * (1.0 - np.cos(x[:, i])) ** 2
        c = c + self.w_vel * np.sum(x[:, n:] ** 2, axis=1)
        if model.name != "pendulum":
            c = c + self.w_pos * x[:, 0] ** 2
        return c

    def running(self, model, x, u) -> np.ndarray:
        return self.state_cost(model, x) + self.w_u * np.sum(u**2, axis=1)

    def terminal(self, model, x) -> np.ndarray:
        return self.w_terminal * self.state_cost(model, x)

    def to_dict(self) -> dict:
        return dict(w_theta=self.w_theta, w_vel=self.w_vel, w_pos=self.w_pos, w_u=self.w_u,
                    w_terminal=self.w_terminal)


@dataclass(frozen=True)
class TrajectoryProblem:
    dynamics: DynamicsModel
    horizon: int
    x_init: np.ndarray
    cost: SwingUpCost = field(default_factory=SwingUpCost)
    control_bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None
    penalty_weight: float = 0.0

    def __post_init__(self):
        x0 = as_vector(self.x_init, "x_init")
        if x0.size != self.dynamics.state_dim:
            raise ValueError(f"x_init has {x0.size} entries, model needs {self.dynamics.state_dim}")
        object.__setattr__(self, "x_init", x0)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be non-negative")
        if self.control_bounds is not None:
            lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (self.dynamics.control_dim,)).copy()
                      for b in self.control_bounds)
            if np.any(~(lo < hi)):
                raise ValueError("control bounds need lo < hi")
            object.__setattr__(self, "control_bounds", (lo, hi))

    @property
    def dim(self) -> int:
        return self.horizon * self.dynamics.control_dim

    def penalty(self, U: np.ndarray) -> np.ndarray:
        """Quadratic one-sided bound violation, per batch row (``U``: B x T x nu)."""
        if self.control_bounds is None or self.penalty_weight == 0.0:
            return np.zeros(U.shape[0])
        lo, hi = self.control_bounds
        over = np.maximum(0.0, U - hi) ** 2 + np.maximum(0.0, lo - U) ** 2
        return self.penalty_weight * over.reshape(U.shape[0], -1).sum(axis=1)

    def to_dict(self) -> dict:
        d = self.dynamics
        return {
            "model": d.name,
            "horizon": self.horizon,
            "dt": d.dt,
            "x_init": self.x_init.tolist(),
            "bounds": None if self.control_bounds is None else [b.tolist() for b in self.control_bounds],
            "penalty_weight": self.penalty_weight,
            "cost_weights": self.cost.to_dict(),
        }


@dataclass(frozen=True)
class Rollout:
    states: np.ndarray
    controls: np.ndarray
    stage_costs: np.ndarray
    terminal_cost: float
    penalty: float
    cost: float


def flatten_controls(controls) -> np.ndarray:
    return np.asarray(controls, dtype=float).reshape(-1).copy()


def unflatten_controls(vector, control_dim: int) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    return v.reshape(v.shape[:-1] + (-1, control_dim)).copy()


def shift_controls(vector, control_dim: int) -> np.ndarray:
    """Warm start for the next receding-horizon solve: drop ``u_0``, repeat ``u_{T-1}``."""
    U = unflatten_controls(vector, control_dim)
    return flatten_controls(np.concatenate([U[1:], U[-1:]], axis=0))


def _simulate(problem: TrajectoryProblem, U: np.ndarray, keep: bool = False):
    model = problem.dynamics
    B, T = U.shape[0], problem.horizon
    x = np.broadcast_to(problem.x_init, (B, model.state_dim)).copy()
    total = np.zeros(B)
    states = [x] if keep else None
    stages = [] if keep else None
    for t in range(T):
        u = U[:, t, :]
        c = problem.cost.running(model, x, u)
        total = total + c
        x = model.step(x, u)
        if not np.all(np.isfinite(x)):
            raise RolloutError(t + 1)
        if keep:
            states.append(x)
            stages.append(c)
    term = problem.cost.terminal(model, x)
    pen = problem.penalty(U)
    cost = total + term + pen
    if keep:
        return cost, np.stack(states, axis=1), np.stack(stages, axis=1), term, pen
    return cost


def rollout_costs(problem: TrajectoryProblem, controls) -> np.ndarray:
    """Costs of a batch of flattened control sequences (``B x T*nu``)."""
    V = np.atleast_2d(np.asarray(controls, dtype=float))
    if V.shape[1] != problem.dim:
        raise ValueError(f"controls need length {problem.dim}, got {V.shape[1]}")
    return _simulate(problem, unflatten_controls(V, problem.dynamics.control_dim))


def rollout(problem: TrajectoryProblem, controls) -> Rollout:
    """Propagate one control sequence and itemize its cost."""
    v = np.asarray(controls, dtype=float).reshape(-1)
    if v.size != problem.dim:
        raise ValueError(f"controls need length {problem.dim}, got {v.size}")
    U = unflatten_controls(v[None, :], problem.dynamics.control_dim)
    cost, states, stages, term, pen = _simulate(problem, U, keep=True)
    return Rollout(states[0], U[0], stages[0], float(term[0]), float(pen[0]), float(cost[0]))


def as_objective(problem: TrajectoryProblem) -> Objective:
    """The rollout cost as an objective over ``R^(T * control_dim)``."""
    return Objective(batch=lambda V: rollout_costs(problem, V), dim=problem.dim,
                     name=f"{problem.dynamics.name}_T{problem.horizon}")


# --------------------------------------------------------------------------
# Catalog and JSON loading
# --------------------------------------------------------------------------

_DEFAULT_BOUNDS = {"pendulum": 25.0, "cartpole": 40.0, "double_cartpole": 60.0}
_HANGING = {
    "pendulum": [math.pi, 0.0],
    "cartpole": [0.0, math.pi, 0.0, 0.0],
    "double_cartpole": [0.0, math.pi, math.pi, 0.0, 0.0, 0.0],
}
PROBLEMS = tuple(_HANGING)


def swingup_problem(model: str, horizon: int = 100, dt: float = 0.01, x_init=None, bounds=None,
                    penalty_weight: float = 10.0, cost_weights: Optional[dict] = None) -> TrajectoryProblem:
    """Swing-up from the hanging rest state with default bounds and weights."""
    if model not in DYNAMICS:
        raise KeyError(f"unknown model {model!r}; valid: {sorted(DYNAMICS)}")
    dyn = DYNAMICS[model](dt=dt)
    if bounds is None:
        b = _DEFAULT_BOUNDS[model]
        bounds = ([-b] * dyn.control_dim, [b] * dyn.control_dim)
    return TrajectoryProblem(
        dynamics=dyn,
        horizon=int(horizon),
        x_init=np.array(_HANGING[model] if x_init is None else x_init, dtype=float),
        cost=SwingUpCost(**(cost_weights or {})),
        control_bounds=bounds,
        penalty_weight=penalty_weight,
    )


_PROBLEM_KEYS = {"model", "horizon", "dt", "x_init", "bounds", "penalty_weight", "cost_weights"}


def problem_from_dict(d: dict) -> TrajectoryProblem:
    unknown = set(d) - _PROBLEM_KEYS
    if unknown:
        raise ValueError(f"unknown problem keys: {sorted(unknown)}")
    if "model" not in d:
        raise ValueError("problem needs a 'model'")
    kwargs = {k: d[k] for k in _PROBLEM_KEYS - {"model"} if k in d}
    return swingup_problem(d["model"], **kwargs)


def load_problem(path) -> TrajectoryProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
