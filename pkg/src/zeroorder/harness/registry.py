"""Algorithm and problem catalogs used by the runner and the CLI.

Each algorithm is described by its default hyperparameters and a function
``run(problem, hp, budget, rng) -> RunTrace``; a configuration may only set
keys that appear among the defaults.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from ..core import BlockDiagonal, Full, RngStream, ScaledIdentity, SearchBudget
from ..distsearch import (
    Elitist,
    ExponentialAverage,
    Ordering,
    SearchDistribution,
    cem,
    cma,
    mppi,
    mppi_cma,
    predictive_sampling,
)
from ..estimators import SmoothingConfig, fd_forward, lse_gradient, random_coordinate, rs_central, rs_forward, spsa
from ..population import Population, es_n_plus_lambda, random_restarts
from ..search import (
    AnnealingSchedule,
    approx_gradient_descent,
    greedy_local_search,
    metropolis_local_search,
    pure_random_search,
    sgld,
)
from ..trajopt import PROBLEMS as TRAJ_MODELS
from ..trajopt import as_objective, swingup_problem
from .functions import FUNCTIONS, make_function

__all__ = ["ProblemInstance", "Algorithm", "ALGORITHMS", "PROBLEM_IDS", "PROBLEM_OPTIONS", "build_problem"]


# --------------------------------------------------------------------------
# Problems
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemInstance:
    id: str
    f: object
    x0: np.ndarray
    info: dict = field(default_factory=dict)
    block_size: int = 1

    @property
    def dim(self) -> int:
        return self.x0.size


_DEFAULT_START = {"sphere": 3.0, "rosenbrock": 0.0, "rastrigin": 2.5, "double_well_1d": -2.0}
_TRAJ_IDS = {f"{m}_swingup": m for m in TRAJ_MODELS}
PROBLEM_IDS = tuple(sorted(FUNCTIONS)) + tuple(sorted(_TRAJ_IDS))
PROBLEM_OPTIONS = {
    **{p: {"dim": 1 if p == "double_well_1d" else 2, "x0": None} for p in FUNCTIONS},
    **{p: {"horizon": 100, "dt": 0.01, "penalty_weight": 10.0, "bounds": None, "cost_weights": None}
       for p in _TRAJ_IDS},
}


def build_problem(problem_id: str, options: dict) -> ProblemInstance:
    if problem_id not in PROBLEM_IDS:
        raise KeyError(f"unknown problem {problem_id!r}; valid: {list(PROBLEM_IDS)}")
    opts = {**PROBLEM_OPTIONS[problem_id], **options}
    if problem_id in FUNCTIONS:
        f = make_function(problem_id, opts["dim"])
        x0 = np.full(f.dim, _DEFAULT_START[problem_id]) if opts["x0"] is None else np.asarray(opts["x0"], float)
        if x0.size != f.dim:
            raise ValueError(f"x0 has {x0.size} entries, problem has dim {f.dim}")
        info = {"minimizer": f.minimizer.tolist(), "minimum": f.minimum}
        return ProblemInstance(problem_id, f, x0, info)
    prob = swingup_problem(_TRAJ_IDS[problem_id], **opts)
    return ProblemInstance(problem_id, as_objective(prob), np.zeros(prob.dim), prob.to_dict(),
                           prob.dynamics.control_dim)


# --------------------------------------------------------------------------
# Algorithms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Algorithm:
    defaults: Dict
    run: Callable
    doc: str = ""


def _iso(sigma, dim):
    return ScaledIdentity(float(sigma) ** 2, dim)


def _estimator(hp):
    name = hp["estimator"]
    cfg = SmoothingConfig(mu=hp["mu"], lam=math.inf if hp.get("lam") is None else hp["lam"],
                          n_samples=hp["n_samples"])
    table = {
        "fd_forward": functools.partial(fd_forward, mu=hp["mu"]),
        "random_coordinate": functools.partial(random_coordinate, mu=hp["mu"]),
        "spsa": functools.partial(spsa, mu=hp["mu"]),
        "rs_forward": functools.partial(rs_forward, cfg=cfg),
        "rs_central": functools.partial(rs_central, cfg=cfg),
        "lse_gradient": functools.partial(lse_gradient, cfg=cfg),
    }
    if name not in table:
        raise ValueError(f"unknown estimator {name!r}; valid: {sorted(table)}")
    return table[name]


def _run_prs(p, hp, budget, rng):
    lo, hi = np.full(p.dim, hp["lo"], float), np.full(p.dim, hp["hi"], float)
    return pure_random_search(p.f, (lo, hi), budget, rng, x0=p.x0)[1]


def _run_greedy(p, hp, budget, rng):
    return greedy_local_search(p.f, p.x0, _iso(hp["sigma"], p.dim), budget, rng)[1]


def _run_agd(p, hp, budget, rng):
    return approx_gradient_descent(p.f, p.x0, _estimator(hp), hp["step"], budget, rng)[1]


def _run_sgld(p, hp, budget, rng):
    sched = AnnealingSchedule(hp["alpha0"], hp["lambda0"], hp["noise"])
    return sgld(p.f, p.x0, _estimator(hp), sched, budget, rng)[1]


def _run_metropolis(p, hp, budget, rng):
    return metropolis_local_search(p.f, p.x0, _iso(hp["sigma"], p.dim), hp["temperature"], budget, rng)[1]


def _run_ps(p, hp, budget, rng):
    return predictive_sampling(p.f, p.x0, _iso(hp["sigma"], p.dim), hp["K"], budget, rng)[1]


def _run_mppi(p, hp, budget, rng):
    return mppi(p.f, p.x0, _iso(hp["sigma"], p.dim), hp["K"], hp["lam"], budget, rng)[1]


def _initial_cov(p, hp):
    if hp.get("block_diagonal"):
        b = p.block_size
        return BlockDiagonal.uniform(p.dim // b, np.eye(b) * float(hp["sigma"]) ** 2)
    return Full(np.eye(p.dim) * float(hp["sigma"]) ** 2)


def _run_mppi_cma(p, hp, budget, rng):
    dist = SearchDistribution(p.x0, _initial_cov(p, hp))
    return mppi_cma(p.f, dist, hp["K"], hp["lam"], (hp["step_mean"], hp["step_cov"]), budget, rng)[1]


def _run_cma(p, hp, budget, rng):
    dist = SearchDistribution(p.x0, _initial_cov(p, hp))
    scheme = {"ordering": Ordering(), "elitist": Elitist(hp["n_elite"]),
              "exponential": ExponentialAverage(hp["lam"])}.get(hp["weights"])
    if scheme is None:
        raise ValueError("weights must be one of: ordering, elitist, exponential")
    return cma(p.f, dist, hp["K"], scheme, (hp["step_mean"], hp["step_cov"]), budget, rng)[1]


def _run_cem(p, hp, budget, rng):
    dist = SearchDistribution(p.x0, Full(np.eye(p.dim) * float(hp["sigma"]) ** 2))
    return cem(p.f, dist, hp["K"], hp["n_elite"], budget, rng)[1]


def _run_es(p, hp, budget, rng):
    pts = p.x0 + _iso(hp["sigma"], p.dim).sample(rng.substream(2), hp["N"])
    pop = Population.from_points(p.f, pts)
    return es_n_plus_lambda(p.f, pop, hp["lam"], _iso(hp["sigma"], p.dim), budget, rng)[1]


def _run_restarts(p, hp, budget, rng):
    box = (np.full(p.dim, hp["lo"], float), np.full(p.dim, hp["hi"], float))
    return random_restarts(p.f, box, _iso(hp["sigma"], p.dim), hp["n_restarts"], budget, rng)[1]


_GRAD = {"estimator": "rs_forward", "mu": 0.1, "n_samples": 10, "lam": None}

ALGORITHMS: Dict[str, Algorithm] = {
    "pure_random_search": Algorithm({"lo": -5.0, "hi": 5.0}, _run_prs),
    "greedy_local_search": Algorithm({"sigma": 0.5}, _run_greedy),
    "approx_gradient_descent": Algorithm({**_GRAD, "step": 0.01}, _run_agd),
    "sgld": Algorithm({**_GRAD, "alpha0": 0.1, "lambda0": 0.5, "noise": True}, _run_sgld),
    "metropolis_local_search": Algorithm({"sigma": 0.5, "temperature": 0.1}, _run_metropolis),
    "predictive_sampling": Algorithm({"K": 2048, "sigma": 1.0}, _run_ps),
    "mppi": Algorithm({"K": 2048, "lam": 0.1, "sigma": 1.0}, _run_mppi),
    "mppi_cma": Algorithm({"K": 2048, "lam": 0.1, "sigma": 1.0, "step_mean": 1.0, "step_cov": 0.1,
                           "block_diagonal": False}, _run_mppi_cma),
    "cma": Algorithm({"K": 64, "weights": "ordering", "n_elite": 8, "lam": 0.1, "sigma": 1.0,
                      "step_mean": 1.0, "step_cov": 0.1, "block_diagonal": False}, _run_cma),
    "cem": Algorithm({"K": 64, "n_elite": 8, "sigma": 1.0}, _run_cem),
    "es_n_plus_lambda": Algorithm({"N": 5, "lam": 20, "sigma": 0.5}, _run_es),
    "random_restarts": Algorithm({"n_restarts": 20, "sigma": 0.5, "lo": -5.0, "hi": 5.0}, _run_restarts),
}


def run_algorithm(algorithm: str, problem: ProblemInstance, hp: dict, budget: SearchBudget, rng: RngStream):
    alg = ALGORITHMS[algorithm]
    return alg.run(problem, {**alg.defaults, **hp}, budget, rng)
