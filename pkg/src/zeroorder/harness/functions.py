"""Analytic benchmark functions with known minimizers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = ["AnalyticFunction", "sphere", "rosenbrock", "rastrigin", "double_well_1d", "FUNCTIONS", "make_function"]


@dataclass(frozen=True)
class AnalyticFunction:
    """A vectorized test function together with its global minimizer.

    Instances are objectives: ``f(x)`` evaluates one point and ``f.batch(X)``
    evaluates the rows of ``X``.
    """

    id: str
    dim: int
    fn: Callable
    minimizer: np.ndarray
    minimum: float

    def batch(self, X) -> np.ndarray:
        return self.fn(np.atleast_2d(np.asarray(X, dtype=float)))

    def __call__(self, x) -> float:
        return float(self.batch(np.asarray(x, dtype=float)[None, :])[0])


def sphere(dim: int = 2) -> AnalyticFunction:
    return AnalyticFunction("sphere", dim, lambda X: np.sum(X**2, axis=1), np.zeros(dim), 0.0)


def rosenbrock(dim: int = 2) -> AnalyticFunction:
    if dim < 2:
        raise ValueError("rosenbrock needs dim >= 2")

    def fn(X):
        return np.sum(100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (1.0 - X[:, :-1]) ** 2, axis=1)

    return AnalyticFunction("rosenbrock", dim, fn, np.ones(dim), 0.0)


def rastrigin(dim: int = 2) -> AnalyticFunction:
    def fn(X):
        return 10.0 * X.shape[1] + np.sum(X**2 - 10.0 * np.cos(2.0 * math.pi * X), axis=1)

    return AnalyticFunction("rastrigin", dim, fn, np.zeros(dim), 0.0)


# Narrow global well at +2, wide shallower well at -2.
_DW = dict(c_narrow=2.0, w_narrow=0.1, d_narrow=1.0, c_wide=-2.0, w_wide=1.0, d_wide=0.8)


_DW_DEN_NARROW = 2.0 * _DW["w_narrow"] ** 2
_DW_DEN_WIDE = 2.0 * _DW["w_wide"] ** 2


def _double_well(X):
    x = X[:, 0]
    narrow = _DW["d_narrow"] * np.exp(-((x - _DW["c_narrow"]) ** 2) / _DW_DEN_NARROW)
    wide = _DW["d_wide"] * np.exp(-((x - _DW["c_wide"]) ** 2) / _DW_DEN_WIDE)
    return 1.0 - narrow - wide


class DoubleWell(AnalyticFunction):
    """``1 - exp(-(x-2)^2 / 0.02) - 0.8 exp(-(x+2)^2 / 2)``.

    Besides the minimizer it stores the local minimizer of the wide well and
    the barrier (local maximum) separating the two basins.
    """

    def __init__(self):
        f1 = lambda x: float(_double_well(np.array([[x]]))[0])  # noqa: E731
        glob = minimize_scalar(f1, bounds=(1.5, 2.5), method="bounded", options={"xatol": 1e-12}).x
        loc = minimize_scalar(f1, bounds=(-3.0, -1.0), method="bounded", options={"xatol": 1e-12}).x
        barrier = minimize_scalar(lambda x: -f1(x), bounds=(0.0, 1.9), method="bounded",
                                  options={"xatol": 1e-12}).x
        super().__init__("double_well_1d", 1, _double_well, np.array([glob]), f1(glob))
        object.__setattr__(self, "local_minimizer", np.array([loc]))
        object.__setattr__(self, "barrier", float(barrier))

    def in_global_basin(self, x) -> np.ndarray:
        """True where ``x`` lies right of the barrier, i.e. in the narrow global basin."""
        return np.asarray(x, dtype=float).reshape(-1) > self.barrier


def double_well_1d() -> DoubleWell:
    return DoubleWell()


FUNCTIONS = {"sphere": sphere, "rosenbrock": rosenbrock, "rastrigin": rastrigin,
             "double_well_1d": lambda dim=1: double_well_1d()}


def make_function(name: str, dim: int = 2) -> AnalyticFunction:
    if name not in FUNCTIONS:
        raise KeyError(f"unknown function {name!r}; valid: {sorted(FUNCTIONS)}")
    return FUNCTIONS[name](dim)
